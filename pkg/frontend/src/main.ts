/**
 * Dashboard entry point: polls the engine API once per second and re-renders
 * the session view. At most one mutating request is in flight at any time.
 */

import { ApiError, EngineClient, type StatePayload } from "./api.js";
import {
  buildPosteriorChart,
  buildSurfaceChart,
  ticks,
  type PosteriorChart,
  type SurfaceChart,
} from "./charts.js";
import {
  formatNumber,
  historyRows,
  isStale,
  observationHint,
  sessionFlags,
  validateObservation,
} from "./view-model.js";

const POLL_MS = 1000;

const params = new URLSearchParams(window.location.search);
const client = new EngineClient(params.get("api") ?? "http://127.0.0.1:8000");

let lastTimestamp: number | null = null;
let requestInFlight = false;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setBanner(message: string | null): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

function svgSurface(chart: SurfaceChart): string {
  const { box } = chart;
  const xt = ticks(chart.xScale)
    .map(
      (t) =>
        `<text x="${t.pos}" y="${box.height - 8}" class="tick">${t.label}</text>`,
    )
    .join("");
  const yt = ticks(chart.yScale)
    .map((t) => `<text x="4" y="${t.pos}" class="tick">${t.label}</text>`)
    .join("");
  const markers = chart.markers
    .map((m) => `<circle cx="${m.cx}" cy="${m.cy}" r="3" class="eval"/>`)
    .join("");
  const band = chart.bandPath ? `<path d="${chart.bandPath}" class="band"/>` : "";
  return `<svg viewBox="0 0 ${box.width} ${box.height}">
    ${band}
    <path d="${chart.meanPath}" class="mean"/>
    ${markers}
    <line x1="${chart.dStar.x}" x2="${chart.dStar.x}" y1="${box.margin.top}" y2="${box.height - box.margin.bottom}" class="dstar"/>
    ${xt}${yt}
  </svg>`;
}

function svgPosterior(chart: PosteriorChart): string {
  const { box } = chart;
  const plotTop = box.margin.top;
  const plotBottom = box.height - box.margin.bottom;
  const truth =
    chart.truthX === null
      ? ""
      : `<line x1="${chart.truthX}" x2="${chart.truthX}" y1="${plotTop}" y2="${plotBottom}" class="truth"/>`;
  const prior = chart.priorPath ? `<path d="${chart.priorPath}" class="prior"/>` : "";
  const xt = ticks(chart.xScale)
    .map(
      (t) =>
        `<text x="${t.pos}" y="${box.height - 8}" class="tick">${t.label}</text>`,
    )
    .join("");
  return `<svg viewBox="0 0 ${box.width} ${box.height}">
    <rect x="${chart.hpdiRect.x}" width="${chart.hpdiRect.width}" y="${plotTop}" height="${plotBottom - plotTop}" class="hpdi"/>
    ${prior}
    <path d="${chart.densityPath}" class="mean"/>
    ${truth}
    ${xt}
  </svg>`;
}

async function renderPosterior(state: StatePayload): Promise<void> {
  const panel = el<HTMLDivElement>("posterior");
  try {
    const posterior = await client.getPosterior();
    panel.innerHTML = posterior.parameters
      .map((marginal, j) => {
        const prior = posterior.prior[j] ?? null;
        const truth = posterior.theta_true ? (posterior.theta_true[j] ?? null) : null;
        const chart = buildPosteriorChart(marginal, prior, truth);
        return `<h3>${marginal.name}</h3>
          <div class="stats">mean ${formatNumber(marginal.mean)} ·
            95% HPDI [${formatNumber(chart.hpdi[0])}, ${formatNumber(chart.hpdi[1])}]</div>
          ${svgPosterior(chart)}`;
      })
      .join("");
  } catch {
    panel.innerHTML = state.iteration === 0
      ? "<p class='dim'>prior only — run an iteration</p>"
      : "<p class='dim'>posterior unavailable</p>";
  }
}

async function renderSurface(): Promise<void> {
  const panel = el<HTMLDivElement>("surface");
  try {
    const surface = await client.getSurface();
    if (surface.designs.length === 0) {
      panel.innerHTML = "<p class='dim'>no evaluations yet</p>";
      return;
    }
    const chart = buildSurfaceChart(surface);
    panel.innerHTML = `<div class="stats">iteration ${surface.iteration} ·
      proposed design ${formatNumber(chart.dStar.design)}</div>${svgSurface(chart)}`;
  } catch {
    panel.innerHTML = "<p class='dim'>no surface yet</p>";
  }
}

function renderHistory(state: StatePayload): void {
  const body = el<HTMLTableSectionElement>("history-body");
  body.innerHTML = historyRows(state)
    .map(
      (r) =>
        `<tr><td>${r.iteration}</td><td>${r.design}</td><td>${r.observation}</td>
         <td>${r.ess}</td><td>${r.resampled}</td></tr>`,
    )
    .join("");
}

async function refresh(): Promise<void> {
  let state: StatePayload;
  try {
    state = await client.getState();
    setBanner(null);
  } catch (err) {
    setBanner(
      err instanceof ApiError ? err.message : "API unreachable — retrying…",
    );
    return;
  }
  if (isStale(lastTimestamp, state)) return;
  lastTimestamp = state.timestamp;

  const flags = sessionFlags(state);
  el<HTMLSpanElement>("status").textContent = flags.statusLabel;
  el<HTMLSpanElement>("model").textContent = state.model;
  el<HTMLSpanElement>("ess").textContent = `${formatNumber(state.ess, 5)} / ${state.n_particles}`;

  const stepBtn = el<HTMLButtonElement>("step");
  const observeBtn = el<HTMLButtonElement>("observe");
  const input = el<HTMLInputElement>("observation");
  stepBtn.disabled = !flags.canStep || requestInFlight;
  observeBtn.disabled = !flags.canObserve || requestInFlight;
  input.disabled = !flags.canObserve;
  input.placeholder = observationHint(state.model);
  el<HTMLSpanElement>("pending").textContent = flags.canObserve
    ? `proposed design: ${formatNumber(state.pending_design ?? NaN)}`
    : "";

  renderHistory(state);
  await Promise.all([renderPosterior(state), renderSurface()]);
}

async function mutate(action: () => Promise<void>): Promise<void> {
  if (requestInFlight) return;
  requestInFlight = true;
  try {
    await action();
    el<HTMLSpanElement>("form-error").textContent = "";
  } catch (err) {
    el<HTMLSpanElement>("form-error").textContent =
      err instanceof ApiError ? err.detail : String(err);
  } finally {
    requestInFlight = false;
    await refresh();
  }
}

export function wire(): void {
  el<HTMLButtonElement>("step").addEventListener("click", () => {
    void mutate(() => client.step());
  });
  el<HTMLButtonElement>("observe").addEventListener("click", () => {
    const model = el<HTMLSpanElement>("model").textContent ?? "";
    const raw = el<HTMLInputElement>("observation").value;
    const check = validateObservation(model, raw);
    if (!check.ok) {
      el<HTMLSpanElement>("form-error").textContent = check.message ?? "invalid";
      return;
    }
    void mutate(() => client.observe(check.value));
  });
  void refresh();
  setInterval(() => void refresh(), POLL_MS);
}

if (typeof document !== "undefined" && document.getElementById("step")) {
  wire();
}
