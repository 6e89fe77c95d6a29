/**
 * Node bindings for the pcqal point-cloud toolkit.
 *
 * This is a thin transport layer: inputs are written as full-precision XYZ
 * text (shortest round-trip decimal, so every float64 survives exactly),
 * the `pcqal` CLI does the math, and results come back over its
 * full-precision JSON channel. Nothing numeric is reimplemented here.
 */
import { execFile } from "node:child_process";
import { mkdtemp, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

const execFileP = promisify(execFile);

/** Mirrors the core library's version; checked against `pcqal --version` in tests. */
export const VERSION = "0.1.0";

/** Path to the pcqal executable; override with the PCQAL_BIN env var. */
export const PCQAL_BIN = process.env.PCQAL_BIN ?? "pcqal";

export type PointsInput = ArrayView | Float64Array | Float32Array | number[][];

/**
 * A (N, 3) row-major view over a Float64Array.
 *
 * Constructing from a Float64Array keeps a reference to the caller's buffer
 * (no copy); Float32Array and number[][] inputs are converted with a copy,
 * since the CLI round-trip is exact only for 64-bit values.
 */
export class ArrayView {
  readonly data: Float64Array;
  readonly n: number;

  private constructor(data: Float64Array, n: number) {
    this.data = data;
    this.n = n;
  }

  static from(input: PointsInput): ArrayView {
    if (input instanceof ArrayView) return input;
    if (input instanceof Float64Array) {
      if (input.length % 3 !== 0) {
        throw new TypeError(`flat point buffer length must be a multiple of 3, got ${input.length}`);
      }
      return new ArrayView(input, input.length / 3);
    }
    if (input instanceof Float32Array) {
      // documented copy: widen to f64
      if (input.length % 3 !== 0) {
        throw new TypeError(`flat point buffer length must be a multiple of 3, got ${input.length}`);
      }
      return new ArrayView(Float64Array.from(input), input.length / 3);
    }
    const flat = new Float64Array(input.length * 3);
    for (let i = 0; i < input.length; i++) {
      const row = input[i];
      if (row.length !== 3) {
        throw new TypeError(`point ${i} has ${row.length} coordinates, expected 3`);
      }
      flat[3 * i] = row[0];
      flat[3 * i + 1] = row[1];
      flat[3 * i + 2] = row[2];
    }
    return new ArrayView(flat, input.length);
  }

  point(i: number): [number, number, number] {
    return [this.data[3 * i], this.data[3 * i + 1], this.data[3 * i + 2]];
  }
}

export interface QalOptions {
  eps?: number;
  omega?: number;
  lambdaAttr?: number;
}

export interface QalResult {
  total: number;
  covTerm: number;
  attrTerm: number;
  /** d(total)/d(pred), shape (N, 3), owned by the caller. */
  grad: ArrayView;
}

/** Field names follow the CLI report schema verbatim. */
export interface QualityReport {
  tau: number;
  coverage: number;
  spurious: number;
  sp_bar: number;
  quality: number;
  f1: number;
  n_pred: number;
  n_gt: number;
  label: string | null;
}

function checkCloud(view: ArrayView, name: string): void {
  if (view.n < 1) {
    throw new RangeError(`${name} must contain at least one point`);
  }
  for (let i = 0; i < view.data.length; i++) {
    if (!Number.isFinite(view.data[i])) {
      throw new RangeError(`${name} contains a non-finite coordinate at flat index ${i}`);
    }
  }
}

function xyzText(view: ArrayView): string {
  // String(x) is the shortest decimal that round-trips the exact float64,
  // so the CLI reads back bit-identical coordinates.
  const lines: string[] = new Array(view.n);
  for (let i = 0; i < view.n; i++) {
    lines[i] = `${view.data[3 * i]} ${view.data[3 * i + 1]} ${view.data[3 * i + 2]}`;
  }
  return lines.join("\n") + "\n";
}

// Domain errors surface as RangeError, everything else as plain Error; the
// original CLI error type is kept in the message for debugging.
const RANGE_ERRORS = new Set([
  "EmptyCloudError",
  "InvalidParamsError",
  "NonFiniteCoordinateError",
  "SinglePointError",
  "SizeMismatchError",
  "TooLargeError",
]);

function mapCliError(stderr: string, code: number | undefined): Error {
  const m = /^pcqal: (\w+): (.*)$/m.exec(stderr);
  if (m) {
    const [, kind, message] = m;
    if (RANGE_ERRORS.has(kind)) return new RangeError(`${kind}: ${message}`);
    return new Error(`${kind}: ${message}`);
  }
  return new Error(`pcqal exited with code ${code}: ${stderr.trim()}`);
}

async function runCli(args: string[]): Promise<string> {
  try {
    const { stdout } = await execFileP(PCQAL_BIN, args, { maxBuffer: 1 << 28 });
    return stdout;
  } catch (err) {
    const e = err as { stderr?: string; code?: number; message?: string };
    if (typeof e.stderr === "string" && e.stderr.length > 0) {
      throw mapCliError(e.stderr, typeof e.code === "number" ? e.code : undefined);
    }
    throw err;
  }
}

async function withCloudFiles<T>(
  clouds: ArrayView[],
  fn: (paths: string[]) => Promise<T>,
): Promise<T> {
  const dir = await mkdtemp(join(tmpdir(), "pcqal-"));
  try {
    const paths = clouds.map((_, i) => join(dir, `c${i}.xyz`));
    await Promise.all(clouds.map((c, i) => writeFile(paths[i], xyzText(c))));
    return await fn(paths);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

/**
 * Quality-aware loss with analytic gradient; numerically identical to the
 * core (the transport is exact in both directions).
 */
export async function qalValueAndGrad(
  pred: PointsInput,
  gt: PointsInput,
  opts: QalOptions = {},
): Promise<QalResult> {
  const p = ArrayView.from(pred);
  const g = ArrayView.from(gt);
  checkCloud(p, "pred");
  checkCloud(g, "gt");
  const eps = opts.eps ?? 0.001;
  const omega = opts.omega ?? 10.0;
  const lambdaAttr = opts.lambdaAttr ?? 1.0;
  if (!(eps > 0) || !(omega > 0) || !(lambdaAttr >= 0)) {
    throw new RangeError(`InvalidParamsError: eps > 0, omega > 0, lambda >= 0 required, ` +
      `got eps=${eps} omega=${omega} lambda=${lambdaAttr}`);
  }
  const out = await withCloudFiles([p, g], (paths) =>
    runCli([
      "loss", paths[0], paths[1],
      "--loss", "qal",
      "--eps", String(eps),
      "--omega", String(omega),
      "--lambda", String(lambdaAttr),
      "--grad", "--json",
    ]),
  );
  const parsed = JSON.parse(out) as {
    total: number; cov_term: number; attr_term: number; grad: number[][];
  };
  const grad = ArrayView.from(parsed.grad);
  return {
    total: parsed.total,
    covTerm: parsed.cov_term,
    attrTerm: parsed.attr_term,
    grad,
  };
}

/** Coverage / spurious quality report at threshold tau. */
export async function qualityAt(
  pred: PointsInput,
  gt: PointsInput,
  tau: number,
): Promise<QualityReport> {
  const p = ArrayView.from(pred);
  const g = ArrayView.from(gt);
  checkCloud(p, "pred");
  checkCloud(g, "gt");
  if (!(tau > 0)) {
    throw new RangeError(`InvalidParamsError: tau must be > 0, got ${tau}`);
  }
  const out = await withCloudFiles([p, g], (paths) =>
    runCli(["eval", paths[0], paths[1], "--tau", String(tau), "--json"]),
  );
  const parsed = JSON.parse(out) as QualityReport & { seed?: number };
  return {
    tau: parsed.tau,
    coverage: parsed.coverage,
    spurious: parsed.spurious,
    sp_bar: parsed.sp_bar,
    quality: parsed.quality,
    f1: parsed.f1,
    n_pred: parsed.n_pred,
    n_gt: parsed.n_gt,
    label: parsed.label ?? null,
  };
}

/** Chamfer distance value ("l1" or "l2" variant). */
export async function chamfer(
  pred: PointsInput,
  gt: PointsInput,
  variant: "l1" | "l2" = "l1",
): Promise<number> {
  const p = ArrayView.from(pred);
  const g = ArrayView.from(gt);
  checkCloud(p, "pred");
  checkCloud(g, "gt");
  const out = await withCloudFiles([p, g], (paths) =>
    runCli(["loss", paths[0], paths[1], "--loss", `cd-${variant}`, "--json"]),
  );
  return (JSON.parse(out) as { total: number }).total;
}

/** Earth mover's distance value (exact or entropic). */
export async function emd(
  pred: PointsInput,
  gt: PointsInput,
  mode: "exact" | "entropic" = "exact",
  reg?: number,
): Promise<number> {
  const p = ArrayView.from(pred);
  const g = ArrayView.from(gt);
  checkCloud(p, "pred");
  checkCloud(g, "gt");
  const args = ["loss", "", "", "--loss", "emd", "--mode", mode, "--json"];
  if (reg !== undefined) args.push("--reg", String(reg));
  const out = await withCloudFiles([p, g], (paths) => {
    args[1] = paths[0];
    args[2] = paths[1];
    return runCli(args);
  });
  return (JSON.parse(out) as { total: number }).total;
}

/**
 * Batched QAL: evaluates pairs concurrently (each pair is its own CLI
 * process, so the event loop stays free). Results keep input order.
 */
export async function qalBatch(
  pairs: Array<[PointsInput, PointsInput]>,
  opts: QalOptions = {},
  concurrency = 4,
): Promise<QalResult[]> {
  if (concurrency < 1) throw new RangeError(`concurrency must be >= 1, got ${concurrency}`);
  const results: QalResult[] = new Array(pairs.length);
  let next = 0;
  async function worker(): Promise<void> {
    while (next < pairs.length) {
      const i = next++;
      const [p, g] = pairs[i];
      results[i] = await qalValueAndGrad(p, g, opts);
    }
  }
  const workers = Array.from({ length: Math.min(concurrency, pairs.length) }, worker);
  await Promise.all(workers);
  return results;
}

/** Version string reported by the core CLI. */
export async function coreVersion(): Promise<string> {
  return (await runCli(["--version"])).trim();
}
