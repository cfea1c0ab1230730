/** Trace CSV reader for run directories produced by the simulation engine.
 *
 * Format: header `t,mode,<state names...>`; empty cells mean the state was
 * absent from that row's topology. Envelope columns `env(x)` are derived
 * from the `x_D` / `x_Q` pair on demand.
 */

import * as fs from "fs";

export const MODE_MICRO = 0;
export const MODE_MACRO = 1;

export interface Trace {
    times: Float64Array;
    modes: Uint8Array;
    columns: Map<string, Float64Array>;
}

export function envelopeParts(name: string): [string, string] | null {
    if (name.startsWith("env(") && name.endsWith(")")) {
        const base = name.slice(4, -1);
        return [`${base}_D`, `${base}_Q`];
    }
    return null;
}

export function hasColumn(trace: Trace, name: string): boolean {
    const env = envelopeParts(name);
    if (env !== null) {
        return trace.columns.has(env[0]) && trace.columns.has(env[1]);
    }
    return trace.columns.has(name);
}

export function getColumn(trace: Trace, name: string): Float64Array {
    const env = envelopeParts(name);
    if (env !== null) {
        const d = getColumn(trace, env[0]);
        const q = getColumn(trace, env[1]);
        const out = new Float64Array(d.length);
        for (let i = 0; i < d.length; i++) {
            out[i] = Math.hypot(d[i], q[i]);
        }
        return out;
    }
    const col = trace.columns.get(name);
    if (col === undefined) {
        throw new Error(`variable ${JSON.stringify(name)} not present in trace`);
    }
    return col;
}

export function readTraceCsv(path: string): Trace {
    const text = fs.readFileSync(path, "utf-8");
    const lines = text.split("\n");
    const header = lines[0].trim().split(",");
    if (header[0] !== "t" || header[1] !== "mode") {
        throw new Error(`${path}: not a trace CSV (header starts ${header.slice(0, 2)})`);
    }
    const names = header.slice(2);
    const rows: string[][] = [];
    for (let i = 1; i < lines.length; i++) {
        const line = lines[i];
        if (line.length === 0) continue;
        rows.push(line.split(","));
    }
    const n = rows.length;
    const times = new Float64Array(n);
    const modes = new Uint8Array(n);
    const cols = names.map(() => new Float64Array(n));
    for (let i = 0; i < n; i++) {
        const cells = rows[i];
        times[i] = Number(cells[0]);
        modes[i] = cells[1] === "macro" ? MODE_MACRO : MODE_MICRO;
        for (let j = 0; j < names.length; j++) {
            const cell = cells[j + 2];
            cols[j][i] = cell === "" || cell === undefined ? NaN : Number(cell);
        }
    }
    const columns = new Map<string, Float64Array>();
    names.forEach((name, j) => columns.set(name, cols[j]));
    return { times, modes, columns };
}

export interface BenchReport {
    wall_baseline_s: number;
    wall_hmm_s: number;
    speedup_pct: number;
    predicted_step_ratio: number;
    errors: {
        rel_l2: number;
        max_abs: number;
        per_variable: Record<string, number>;
        interval: [number, number];
        n_matched: number;
    } | null;
    config: {
        outputs?: { compare?: string[]; compare_interval?: [number, number] };
    };
}

export function readBenchReport(path: string): BenchReport {
    return JSON.parse(fs.readFileSync(path, "utf-8")) as BenchReport;
}
