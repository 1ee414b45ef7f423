// Session view-model: everything the screens render, fed only by API polls.
// Concurrent polls are coalesced and stale responses dropped by sequence
// number, so a slow response can never overwrite a newer snapshot.

import { ApiError, NodeApi, type RequestView } from "./api";
import {
  buildAcceptance,
  buildConfirmation,
  buildOffer,
  buildRequest,
  type Wallet,
} from "./signing";

export type Role = "customer" | "provider";

export interface SessionState {
  nodeUrl: string;
  address: string;
  balance: number;
  height: number;
  synced: boolean;
  connected: boolean;
  role: Role;
  myRequests: RequestView[];
  openRequests: RequestView[];
  pendingTx: string | null;
  banner: string | null;
}

export class Marketplace {
  readonly state: SessionState;
  private seq = 0;
  private applied = 0;
  private inFlight = false;
  private listeners: Array<() => void> = [];

  constructor(
    private api: NodeApi,
    readonly wallet: Wallet,
  ) {
    this.state = {
      nodeUrl: api.baseUrl,
      address: wallet.address,
      balance: 0,
      height: 0,
      synced: false,
      connected: false,
      role: "customer",
      myRequests: [],
      openRequests: [],
      pendingTx: null,
      banner: null,
    };
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  setRole(role: Role): void {
    this.state.role = role;
    this.notify();
  }

  dismissBanner(): void {
    this.state.banner = null;
    this.notify();
  }

  private fail(error: unknown): void {
    this.state.banner = error instanceof Error ? error.message : String(error);
    if (!(error instanceof ApiError)) {
      this.state.connected = false;
    }
    this.notify();
  }

  async refresh(): Promise<void> {
    if (this.inFlight) return; // coalesce overlapping polls
    this.inFlight = true;
    const seq = ++this.seq;
    try {
      const [status, balance, requests] = await Promise.all([
        this.api.status(),
        this.api.balance(this.wallet.address),
        this.api.requests(),
      ]);
      if (seq < this.applied) return; // a newer snapshot already landed
      this.applied = seq;
      this.state.connected = true;
      this.state.height = status.height;
      this.state.synced = status.synced;
      this.state.balance = balance;
      this.state.myRequests = requests
        .filter((r) => r.customer === this.wallet.address)
        .map(sortOffers);
      this.state.openRequests = requests
        .filter((r) => r.status === "OPEN" && r.customer !== this.wallet.address)
        .map(sortOffers);
      if (this.state.pendingTx !== null) {
        const confirmed = requests.some((r) =>
          r.request_id === this.state.pendingTx ||
          r.offers.some((o) => o.offer_id === this.state.pendingTx));
        if (confirmed) this.state.pendingTx = null;
      }
      this.state.banner = null;
      this.notify();
    } catch (error) {
      this.fail(error);
    } finally {
      this.inFlight = false;
    }
  }

  validateRequestForm(dueDate: number, maxPrice: number, now: number): string | null {
    if (!Number.isSafeInteger(dueDate) || dueDate <= now) {
      return "due date must be in the future";
    }
    if (!Number.isSafeInteger(maxPrice) || maxPrice < 1) {
      return "max price must be a positive integer";
    }
    return null;
  }

  async postRequest(productSpec: string, processTag: string, dueDate: number,
                    maxPrice: number): Promise<string | null> {
    const clientError = this.validateRequestForm(dueDate, maxPrice,
                                                 Math.floor(Date.now() / 1000));
    if (clientError) {
      this.state.banner = clientError;
      this.notify();
      return null; // no network call for locally-invalid input
    }
    const signed = buildRequest(this.wallet, productSpec, processTag, dueDate, maxPrice);
    try {
      const txId = await this.api.submitRequest(signed.wire);
      this.state.pendingTx = txId;
      this.notify();
      return txId;
    } catch (error) {
      this.fail(error);
      return null;
    }
  }

  async acceptOffer(requestId: string, offerId: string): Promise<string | null> {
    const signed = buildAcceptance(this.wallet, requestId, offerId);
    try {
      const txId = await this.api.submitAcceptance(signed.wire);
      this.state.pendingTx = txId;
      this.notify();
      return txId;
    } catch (error) {
      this.fail(error);
      return null;
    }
  }

  async confirmDelivery(requestId: string): Promise<string | null> {
    const signed = buildConfirmation(this.wallet, requestId);
    try {
      const txId = await this.api.submitConfirmation(signed.wire);
      this.state.pendingTx = txId;
      this.notify();
      return txId;
    } catch (error) {
      this.fail(error);
      return null;
    }
  }

  async submitQuote(requestId: string, price: number,
                    promisedDueDate: number): Promise<string | null> {
    const signed = buildOffer(this.wallet, requestId, price, promisedDueDate);
    try {
      const txId = await this.api.submitOffer(signed.wire);
      this.state.pendingTx = txId;
      this.notify();
      return txId;
    } catch (error) {
      this.fail(error);
      return null;
    }
  }
}

// Offers ordered like the contract's default selection (price, promise, id)
// so the recommended quote always renders first.
export function sortOffers(view: RequestView): RequestView {
  const offers = [...view.offers].sort((a, b) =>
    a.quoted_price - b.quoted_price ||
    a.promised_due_date - b.promised_due_date ||
    (a.offer_id < b.offer_id ? -1 : a.offer_id > b.offer_id ? 1 : 0));
  return { ...view, offers };
}

export function startPolling(market: Marketplace, intervalMs = 2000): () => void {
  const timer = setInterval(() => void market.refresh(), intervalMs);
  void market.refresh();
  return () => clearInterval(timer);
}
