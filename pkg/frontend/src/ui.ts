// DOM layer: render the session state and wire form events. All content
// comes from the view-model; user text is escaped before it touches HTML.

import type { RequestView } from "./api";
import type { Marketplace } from "./viewmodel";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function shortId(id: string): string {
  return id.slice(0, 10) + "…";
}

function dueLabel(epoch: number): string {
  return new Date(epoch * 1000).toISOString().slice(0, 16).replace("T", " ");
}

function statusBadge(status: RequestView["status"]): string {
  return `<span class="badge badge-${status.toLowerCase()}">${status}</span>`;
}

function offerRows(view: RequestView, mine: boolean): string {
  if (view.offers.length === 0) {
    return `<p class="muted">no offers yet</p>`;
  }
  const rows = view.offers
    .map((offer, index) => {
      const best = index === 0 ? ` <span class="badge badge-best">best</span>` : "";
      const accepted = view.accepted_offer === offer.offer_id
        ? ` <span class="badge badge-accepted">chosen</span>` : "";
      const accept = mine && view.status === "OPEN"
        ? `<button data-action="accept" data-request="${view.request_id}"
                   data-offer="${offer.offer_id}"
                   data-price="${offer.quoted_price}">accept</button>`
        : "";
      return `<tr>
        <td>${shortId(offer.offer_id)}</td>
        <td>${escapeHtml(offer.provider)}</td>
        <td class="num">${offer.quoted_price}</td>
        <td>${dueLabel(offer.promised_due_date)}</td>
        <td>${best}${accepted}${accept}</td>
      </tr>`;
    })
    .join("");
  return `<table class="offers">
    <thead><tr><th>offer</th><th>provider</th><th>price</th><th>promised</th><th></th></tr></thead>
    <tbody>${rows}</tbody></table>`;
}

function requestCard(view: RequestView, mine: boolean): string {
  const escrow = view.escrow > 0
    ? `<span class="badge badge-escrow">escrow ${view.escrow}</span>` : "";
  const confirm = mine && view.status === "ACCEPTED"
    ? `<button data-action="confirm" data-request="${view.request_id}">
         confirm delivery</button>` : "";
  const quoteForm = !mine && view.status === "OPEN"
    ? `<form class="quote-form" data-request="${view.request_id}">
         <input name="price" type="number" min="1" max="${view.max_price}"
                placeholder="price ≤ ${view.max_price}" required>
         <input name="due" type="datetime-local" required>
         <button type="submit">send quote</button>
       </form>` : "";
  return `<article class="card" data-request-card="${view.request_id}">
    <header>
      <strong>${escapeHtml(view.product_spec)}</strong>
      ${statusBadge(view.status)} ${escrow}
    </header>
    <p class="meta">
      <code>${shortId(view.request_id)}</code> ·
      tag <b>${escapeHtml(view.process_tag)}</b> ·
      due ${dueLabel(view.due_date)} · max ${view.max_price}
    </p>
    ${offerRows(view, mine)}
    ${confirm}${quoteForm}
  </article>`;
}

export function render(root: HTMLElement, market: Marketplace): void {
  const s = market.state;
  const banner = s.banner
    ? `<div class="banner">${escapeHtml(s.banner)}
         <button data-action="dismiss">×</button></div>`
    : "";
  const pending = s.pendingTx
    ? `<span class="badge badge-pending">tx ${shortId(s.pendingTx)} pending…</span>`
    : "";
  const connection = s.connected
    ? `height ${s.height}${s.synced ? "" : " (syncing)"}`
    : `<span class="offline">node unreachable</span>`;
  const customerView = `
    <section>
      <h2>post a service request</h2>
      <form id="request-form">
        <input name="spec" placeholder="what to manufacture" required>
        <input name="tag" placeholder="process tag, e.g. cnc-milling" required>
        <input name="due" type="datetime-local" required>
        <input name="max" type="number" min="1" placeholder="max price" required>
        <button type="submit">submit request</button>
      </form>
      <h2>my requests</h2>
      ${s.myRequests.map((r) => requestCard(r, true)).join("") ||
        `<p class="muted">none yet</p>`}
    </section>`;
  const providerView = `
    <section>
      <h2>open requests from customers</h2>
      ${s.openRequests.map((r) => requestCard(r, false)).join("") ||
        `<p class="muted">nothing open right now</p>`}
    </section>`;
  root.innerHTML = `
    ${banner}
    <header class="session">
      <div>
        <span class="addr" title="your address">${s.address}</span>
        <span class="balance">balance <b>${s.balance}</b></span>
        ${pending}
      </div>
      <div>
        <label><input type="radio" name="role" value="customer"
          ${s.role === "customer" ? "checked" : ""}> customer</label>
        <label><input type="radio" name="role" value="provider"
          ${s.role === "provider" ? "checked" : ""}> provider</label>
        <span class="conn">${connection}</span>
      </div>
    </header>
    ${s.role === "customer" ? customerView : providerView}`;
}

function parseDatetimeLocal(value: string): number {
  return Math.floor(new Date(value).getTime() / 1000);
}

export function bindEvents(root: HTMLElement, market: Marketplace): void {
  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const action = target.dataset.action;
    if (action === "dismiss") {
      market.dismissBanner();
    } else if (action === "accept") {
      const price = Number(target.dataset.price);
      const ok = window.confirm(
        `Accept this offer? ${price} units move into escrow until you ` +
        `confirm delivery. Your balance: ${market.state.balance}.`);
      if (ok) {
        void market.acceptOffer(target.dataset.request!, target.dataset.offer!);
      }
    } else if (action === "confirm") {
      void market.confirmDelivery(target.dataset.request!);
    }
  });
  root.addEventListener("change", (event) => {
    const target = event.target as HTMLInputElement;
    if (target.name === "role") {
      market.setRole(target.value as "customer" | "provider");
    }
  });
  root.addEventListener("submit", (event) => {
    const form = event.target as HTMLFormElement;
    event.preventDefault();
    const data = new FormData(form);
    if (form.id === "request-form") {
      void market.postRequest(
        String(data.get("spec")),
        String(data.get("tag")),
        parseDatetimeLocal(String(data.get("due"))),
        Number(data.get("max")),
      ).then((txId) => {
        if (txId) form.reset();
      });
    } else if (form.classList.contains("quote-form")) {
      void market.submitQuote(
        form.dataset.request!,
        Number(data.get("price")),
        parseDatetimeLocal(String(data.get("due"))),
      );
    }
  });
}
