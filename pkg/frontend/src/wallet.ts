// Wallet persistence: the seed lives in browser storage, nowhere else.

import { createWallet, type Wallet } from "./signing";

const STORAGE_KEY = "chainfab.wallet";

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export function loadOrCreateWallet(store: KeyValueStore): Wallet {
  const saved = store.getItem(STORAGE_KEY);
  if (saved) {
    try {
      const parsed = JSON.parse(saved) as Wallet;
      // re-derive so a hand-edited seed still yields a consistent identity
      return createWallet(parsed.seed);
    } catch {
      // fall through to a fresh wallet
    }
  }
  const wallet = createWallet();
  store.setItem(STORAGE_KEY, JSON.stringify(wallet));
  return wallet;
}
