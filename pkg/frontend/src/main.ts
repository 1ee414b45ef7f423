import { NodeApi } from "./api";
import { bindEvents, render } from "./ui";
import { Marketplace, startPolling } from "./viewmodel";
import { loadOrCreateWallet } from "./wallet";
import "./style.css";

const params = new URLSearchParams(window.location.search);
const nodeUrl = params.get("node") ?? "http://127.0.0.1:7772";

const wallet = loadOrCreateWallet(window.localStorage);
const market = new Marketplace(new NodeApi(nodeUrl), wallet);

const root = document.getElementById("app")!;
market.onChange(() => render(root, market));
bindEvents(root, market);
render(root, market);
startPolling(market, 2000);
