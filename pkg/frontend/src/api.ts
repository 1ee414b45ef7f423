// Thin typed client for the node's REST surface. The UI holds no state the
// API cannot re-derive; every displayed number comes from these responses.

import type { TxWire } from "./signing";

export interface NodeStatus {
  network_id: string;
  node_id: string;
  role: string;
  height: number;
  tip: string;
  peers: number;
  mempool: number;
  synced: boolean;
  version: string;
}

export interface OfferView {
  offer_id: string;
  provider: string;
  quoted_price: number;
  promised_due_date: number;
}

export interface RequestView {
  request_id: string;
  customer: string;
  product_spec: string;
  process_tag: string;
  due_date: number;
  max_price: number;
  status: "OPEN" | "ACCEPTED" | "FULFILLED" | "EXPIRED";
  accepted_offer: string | null;
  escrow: number;
  offers: OfferView[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

export class NodeApi {
  constructor(readonly baseUrl: string) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl.replace(/\/$/, "") + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = `HTTP${response.status}`;
      let detail = response.statusText;
      try {
        const parsed = (await response.json()) as { detail?: { error?: string; detail?: string } };
        if (parsed.detail?.error) {
          code = parsed.detail.error;
          detail = parsed.detail.detail ?? "";
        }
      } catch {
        // non-JSON error body: keep the HTTP status
      }
      throw new ApiError(response.status, code, detail);
    }
    return (await response.json()) as T;
  }

  status(): Promise<NodeStatus> {
    return this.call("GET", "/status");
  }

  async balance(address: string): Promise<number> {
    const body = await this.call<{ balance: number }>("GET", `/balance/${address}`);
    return body.balance;
  }

  async requests(status?: string): Promise<RequestView[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    const body = await this.call<{ requests: RequestView[] }>("GET", `/requests${query}`);
    return body.requests;
  }

  request(id: string): Promise<RequestView> {
    return this.call("GET", `/requests/${id}`);
  }

  async submit(path: string, wire: TxWire): Promise<string> {
    const body = await this.call<{ tx_id: string }>("POST", path, { tx: wire });
    return body.tx_id;
  }

  submitRequest(wire: TxWire): Promise<string> {
    return this.submit("/requests", wire);
  }

  submitOffer(wire: TxWire): Promise<string> {
    return this.submit("/offers", wire);
  }

  submitAcceptance(wire: TxWire): Promise<string> {
    return this.submit("/accept", wire);
  }

  submitConfirmation(wire: TxWire): Promise<string> {
    return this.submit("/confirm", wire);
  }
}
