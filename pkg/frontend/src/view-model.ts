/**
 * Pure view-model logic: UI state derived from API payloads, plus
 * client-side observation validation mirroring the server's schemas.
 *
 * Keeping this free of DOM access lets the whole state machine run under
 * plain node tests.
 */

import type { StatePayload } from "./api.js";

export interface SessionFlags {
  /** Step button usable (campaign can advance without an observation). */
  canStep: boolean;
  /** Observation form usable (a proposed design is waiting). */
  canObserve: boolean;
  /** Campaign finished; final posterior should stay pinned. */
  isDone: boolean;
  /** Human-readable status line. */
  statusLabel: string;
}

export function sessionFlags(state: StatePayload): SessionFlags {
  const { status } = state;
  return {
    canStep: status === "running",
    canObserve: status === "awaiting_observation",
    isDone: status === "done",
    statusLabel:
      status === "running"
        ? `running — iteration ${state.iteration + 1} of ${state.n_iterations}`
        : status === "awaiting_observation"
          ? `awaiting observation at design ${formatNumber(state.pending_design ?? NaN)}`
          : `done — ${state.n_iterations} iterations completed`,
  };
}

/**
 * Detect a payload that is older than one we already rendered; polling can
 * race a slow response past a fresh one.
 */
export function isStale(previousTimestamp: number | null, payload: StatePayload): boolean {
  return previousTimestamp !== null && payload.timestamp < previousTimestamp;
}

export interface ValidationResult {
  ok: boolean;
  /** Parsed observation to POST, present when ok. */
  value?: unknown;
  /** Field-level message when not ok. */
  message?: string;
}

/**
 * Validate raw form input against the model's observation schema before it
 * is submitted. Mirrors the server-side rules so obviously invalid values
 * never leave the browser.
 */
export function validateObservation(model: string, raw: string): ValidationResult {
  const trimmed = raw.trim();
  if (trimmed === "") return { ok: false, message: "enter an observation" };
  switch (model) {
    case "oscillation": {
      const y = Number(trimmed);
      if (!Number.isFinite(y)) return { ok: false, message: "y must be a number" };
      return { ok: true, value: y };
    }
    case "death": {
      const count = Number(trimmed);
      if (!Number.isInteger(count) || count < 0 || count > 50) {
        return { ok: false, message: "infected count must be an integer in [0, 50]" };
      }
      return { ok: true, value: count };
    }
    case "sir": {
      const parts = trimmed.split(",").map((p) => Number(p.trim()));
      if (parts.length !== 3 || parts.some((v) => !Number.isInteger(v) || v < 0)) {
        return { ok: false, message: "enter S,I,R as three non-negative integers" };
      }
      const [s, i, r] = parts as [number, number, number];
      if (s + i + r !== 50) {
        return { ok: false, message: `S+I+R must equal 50 (got ${s + i + r})` };
      }
      return { ok: true, value: parts };
    }
    case "cell": {
      const parts = trimmed.split(",").map((p) => Number(p.trim()));
      if (parts.length !== 2 || parts.some((v) => !Number.isInteger(v) || v < 0)) {
        return { ok: false, message: "enter hamming,count as two non-negative integers" };
      }
      return { ok: true, value: parts };
    }
    default:
      return { ok: false, message: `unknown model '${model}'` };
  }
}

/** Hint shown next to the observation input. */
export function observationHint(model: string): string {
  switch (model) {
    case "oscillation":
      return "measured value y";
    case "death":
      return "number infected (0–50)";
    case "sir":
      return "S,I,R (sums to 50)";
    case "cell":
      return "hamming,count";
    default:
      return "";
  }
}

export function formatNumber(x: number, digits = 4): string {
  if (!Number.isFinite(x)) return "—";
  if (Number.isInteger(x)) return String(x);
  return x.toPrecision(digits);
}

/** Rows for the history table, newest first. */
export function historyRows(state: StatePayload): Array<{
  iteration: number;
  design: string;
  observation: string;
  ess: string;
  resampled: string;
}> {
  return [...state.history].reverse().map((h) => ({
    iteration: h.iteration,
    design: formatNumber(h.design),
    observation: Array.isArray(h.observation)
      ? (h.observation as number[]).map((v) => formatNumber(v)).join(", ")
      : formatNumber(Number(h.observation)),
    ess: formatNumber(h.ess_before, 5),
    resampled: h.resampled ? "yes" : "",
  }));
}
