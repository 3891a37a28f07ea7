/**
 * Typed client for the campaign engine HTTP API.
 *
 * Every payload is validated with zod before it reaches the view layer, so
 * rendering code can rely on the shapes below. The dashboard performs no
 * inference of its own: all numbers on screen come from these payloads.
 */

import { z } from "zod";

export const designDomainSchema = z.object({
  kind: z.enum(["continuous", "discrete"]),
  lo: z.number(),
  hi: z.number(),
});

export const historyRowSchema = z.object({
  iteration: z.number().int(),
  design: z.number(),
  observation: z.unknown(),
  ess_before: z.number(),
  resampled: z.boolean(),
});

export const statePayloadSchema = z.object({
  status: z.enum(["running", "awaiting_observation", "done"]),
  iteration: z.number().int().nonnegative(),
  n_iterations: z.number().int().positive(),
  model: z.string(),
  param_names: z.array(z.string()).nonempty(),
  oracle: z.enum(["simulated", "interactive"]),
  theta_true: z.array(z.number()).nullable(),
  design_domain: designDomainSchema,
  pending_design: z.number().nullable(),
  ess: z.number(),
  n_particles: z.number().int(),
  history: z.array(historyRowSchema),
  timestamp: z.number(),
});

export const marginalSchema = z.object({
  name: z.string(),
  mean: z.number(),
  hpdi: z.tuple([z.number(), z.number()]),
  grid: z.array(z.number()),
  density: z.array(z.number()),
});

export const posteriorPayloadSchema = z.object({
  iteration: z.number().int(),
  parameters: z.array(marginalSchema).nonempty(),
  prior: z.array(marginalSchema),
  theta_true: z.array(z.number()).nullable(),
});

export const surfacePayloadSchema = z.object({
  iteration: z.number().int(),
  designs: z.array(z.number()),
  values: z.array(z.number()),
  d_star: z.number(),
  best_raw: z.number(),
  grid: z.array(z.number()),
  grid_mean: z.array(z.number()),
  grid_var: z.array(z.number()),
  hyperparams: z.object({
    lengthscale: z.number(),
    signal_var: z.number(),
    noise_var: z.number(),
  }),
});

export type StatePayload = z.infer<typeof statePayloadSchema>;
export type PosteriorPayload = z.infer<typeof posteriorPayloadSchema>;
export type SurfacePayload = z.infer<typeof surfacePayloadSchema>;
export type Marginal = z.infer<typeof marginalSchema>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`API error ${status}: ${detail}`);
  }
}

async function parseResponse<T>(res: Response, schema: z.ZodType<T>): Promise<T> {
  const body = await res.json().catch(() => ({}));
  if (!res.ok) {
    const detail =
      typeof body === "object" && body !== null && "detail" in body
        ? String((body as { detail: unknown }).detail)
        : res.statusText;
    throw new ApiError(res.status, detail);
  }
  return schema.parse(body);
}

export class EngineClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  getState(): Promise<StatePayload> {
    return this.request("/state", statePayloadSchema);
  }

  getPosterior(iteration?: number): Promise<PosteriorPayload> {
    const q = iteration === undefined ? "" : `?iteration=${iteration}`;
    return this.request(`/posterior${q}`, posteriorPayloadSchema);
  }

  getSurface(iteration?: number): Promise<SurfacePayload> {
    const q = iteration === undefined ? "" : `?iteration=${iteration}`;
    return this.request(`/surface${q}`, surfacePayloadSchema);
  }

  async step(): Promise<void> {
    await this.post("/step", undefined);
  }

  async observe(y: unknown): Promise<void> {
    await this.post("/observe", { y });
  }

  async reset(config: Record<string, unknown>): Promise<void> {
    await this.post("/reset", { config });
  }

  private async request<T>(path: string, schema: z.ZodType<T>): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`);
    return parseResponse(res, schema);
  }

  private async post(path: string, body: unknown): Promise<void> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    await parseResponse(res, z.unknown());
  }
}
