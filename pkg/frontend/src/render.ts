/** The four figure types rendered from a completed run directory:
 *
 * overlay   baseline vs multiscale curves, micro segments dense and macro
 *           points as square markers;
 * envelope  instantaneous three-phase amplitude hypot(x_D, x_Q) of both runs;
 * error     running relative-L2 of the multiscale run against the baseline,
 *           whose terminal value reproduces the bench report's rel_l2;
 * all       everything above.
 */

import * as fs from "fs";
import * as path from "path";

import {
    BenchReport,
    MODE_MACRO,
    Trace,
    envelopeParts,
    getColumn,
    hasColumn,
    readBenchReport,
    readTraceCsv,
} from "./csv";
import { BLUE, Figure, GRAY, ORANGE, drawAxes, polyline, toPixel } from "./figure";

export interface RunDir {
    baseline: Trace;
    hmm: Trace;
    report: BenchReport | null;
    dir: string;
}

export function loadRunDir(dir: string): RunDir {
    const baselinePath = path.join(dir, "baseline.csv");
    const hmmPath = path.join(dir, "hmm.csv");
    if (!fs.existsSync(baselinePath) || !fs.existsSync(hmmPath)) {
        throw new Error(`${dir}: expected baseline.csv and hmm.csv from a bench run`);
    }
    const reportPath = path.join(dir, "bench_report.json");
    return {
        baseline: readTraceCsv(baselinePath),
        hmm: readTraceCsv(hmmPath),
        report: fs.existsSync(reportPath) ? readBenchReport(reportPath) : null,
        dir,
    };
}

function finiteExtent(arrays: ArrayLike<number>[]): [number, number] {
    let lo = Infinity;
    let hi = -Infinity;
    for (const arr of arrays) {
        for (let i = 0; i < arr.length; i++) {
            const v = arr[i];
            if (Number.isFinite(v)) {
                if (v < lo) lo = v;
                if (v > hi) hi = v;
            }
        }
    }
    if (!(lo < hi)) {
        lo = Number.isFinite(lo) ? lo - 1 : 0;
        hi = lo + 2;
    }
    const pad = (hi - lo) * 0.05;
    return [lo - pad, hi + pad];
}

function safeName(variable: string): string {
    return variable.replace(/[()]/g, "").replace(/[^A-Za-z0-9_]/g, "_");
}

export function renderOverlay(run: RunDir, variable: string, outDir: string): string {
    const base = getColumn(run.baseline, variable);
    const cand = getColumn(run.hmm, variable);
    const fig = new Figure();
    const [lo, hi] = finiteExtent([base, cand]);
    const ax = drawAxes(
        fig,
        `overlay ${variable}  (gray: baseline, blue: multiscale, squares: macro)`,
        run.baseline.times[0],
        run.baseline.times[run.baseline.times.length - 1],
        lo,
        hi,
    );
    polyline(fig, ax, run.baseline.times, base, GRAY);
    polyline(fig, ax, run.hmm.times, cand, BLUE, (i) => run.hmm.modes[i] !== MODE_MACRO);
    for (let i = 0; i < run.hmm.times.length; i++) {
        if (run.hmm.modes[i] === MODE_MACRO && Number.isFinite(cand[i])) {
            const [x, y] = toPixel(ax, run.hmm.times[i], cand[i]);
            fig.marker(x, y, ORANGE);
        }
    }
    const file = path.join(outDir, `overlay_${safeName(variable)}.png`);
    fig.write(file);
    return file;
}

export function renderEnvelope(run: RunDir, variable: string, outDir: string): string {
    const envName = envelopeParts(variable) !== null ? variable : `env(${variable})`;
    if (!hasColumn(run.baseline, envName)) {
        throw new Error(`variable ${variable} has no D/Q pair for an envelope figure`);
    }
    const base = getColumn(run.baseline, envName);
    const cand = getColumn(run.hmm, envName);
    const fig = new Figure();
    const [lo, hi] = finiteExtent([base, cand]);
    const ax = drawAxes(
        fig,
        `envelope ${envName}  (gray: baseline, blue: multiscale)`,
        run.baseline.times[0],
        run.baseline.times[run.baseline.times.length - 1],
        lo,
        hi,
    );
    polyline(fig, ax, run.baseline.times, base, GRAY);
    polyline(fig, ax, run.hmm.times, cand, BLUE);
    const file = path.join(outDir, `envelope_${safeName(envName)}.png`);
    fig.write(file);
    return file;
}

export interface MatchedError {
    times: number[];
    running: number[];
    terminal: number;
}

/** Nearest-node matching within half the reference step, then the running
 * relative L2 -- the same definition the bench report uses. */
export function runningRelL2(
    reference: Trace,
    candidate: Trace,
    variable: string,
    interval: [number, number] | null,
): MatchedError {
    const tRef = reference.times;
    const tCand = candidate.times;
    const [lo, hi] = interval ?? [tRef[0], tRef[tRef.length - 1]];
    const refIdx: number[] = [];
    for (let i = 0; i < tRef.length; i++) {
        if (tRef[i] >= lo && tRef[i] <= hi) refIdx.push(i);
    }
    if (refIdx.length === 0) throw new Error("empty comparison interval");
    let hMin = Infinity;
    for (let k = 1; k < refIdx.length; k++) {
        const d = tRef[refIdx[k]] - tRef[refIdx[k - 1]];
        if (d > 0 && d < hMin) hMin = d;
    }
    const tol = Number.isFinite(hMin) ? hMin / 2 : 1e-12;

    const refCol = getColumn(reference, variable);
    const candCol = getColumn(candidate, variable);
    const times: number[] = [];
    const running: number[] = [];
    let sumErr = 0;
    let sumRef = 0;
    let j = 0;
    for (let i = 0; i < tCand.length; i++) {
        const t = tCand[i];
        if (t < lo || t > hi) continue;
        while (j + 1 < refIdx.length && tRef[refIdx[j + 1]] <= t) j++;
        let best = refIdx[j];
        if (j + 1 < refIdx.length) {
            const a = Math.abs(tRef[refIdx[j]] - t);
            const b = Math.abs(tRef[refIdx[j + 1]] - t);
            if (b < a) best = refIdx[j + 1];
        }
        if (Math.abs(tRef[best] - t) > tol) continue;
        const e = candCol[i] - refCol[best];
        const r = refCol[best];
        if (!Number.isFinite(e) || !Number.isFinite(r)) continue;
        sumErr += e * e;
        sumRef += r * r;
        times.push(t);
        running.push(sumRef > 0 ? Math.sqrt(sumErr / sumRef) : Math.sqrt(sumErr));
    }
    if (times.length === 0) throw new Error("no matched nodes in the comparison interval");
    return { times, running, terminal: running[running.length - 1] };
}

export function renderError(run: RunDir, variable: string, outDir: string): string {
    const interval = run.report?.errors?.interval ?? null;
    const res = runningRelL2(run.baseline, run.hmm, variable, interval);
    const fig = new Figure();
    const [lo, hi] = finiteExtent([res.running]);
    const ax = drawAxes(
        fig,
        `running rel l2 ${variable}  terminal = ${res.terminal.toExponential(4)}`,
        res.times[0],
        res.times[res.times.length - 1],
        Math.min(0, lo),
        hi,
    );
    polyline(fig, ax, res.times, res.running, BLUE);
    const file = path.join(outDir, `error_${safeName(variable)}.png`);
    fig.write(file);
    return file;
}

export type FigureSet = "overlay" | "envelope" | "error" | "all";

export interface RenderJob {
    runDir: string;
    figures: FigureSet;
    variables: string[];
    outDir?: string;
}

export function render(job: RenderJob): string[] {
    const run = loadRunDir(job.runDir);
    const outDir = job.outDir ?? job.runDir;
    fs.mkdirSync(outDir, { recursive: true });
    let variables = job.variables;
    if (variables.length === 0) {
        variables = run.report?.config?.outputs?.compare ?? [];
        if (variables.length === 0) {
            throw new Error("no variables given and none recorded in the bench report");
        }
    }
    for (const v of variables) {
        if (!hasColumn(run.baseline, v) || !hasColumn(run.hmm, v)) {
            throw new Error(`variable ${JSON.stringify(v)} missing from the traces`);
        }
    }
    const files: string[] = [];
    for (const v of variables) {
        if (job.figures === "overlay" || job.figures === "all") {
            files.push(renderOverlay(run, v, outDir));
        }
        if (job.figures === "envelope" || job.figures === "all") {
            const base = envelopeParts(v)?.[0] ?? `${v}_D`;
            if (run.baseline.columns.has(base)) {
                files.push(renderEnvelope(run, v, outDir));
            }
        }
        if (job.figures === "error" || job.figures === "all") {
            files.push(renderError(run, v, outDir));
        }
    }
    return files;
}
