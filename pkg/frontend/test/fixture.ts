/** Synthetic bench run directory with analytically known error metrics. */

import * as fs from "fs";
import * as os from "os";
import * as path from "path";

export interface Fixture {
    dir: string;
    relL2x: number;
}

function fmt(v: number): string {
    return v.toExponential(16);
}

export function makeRunDir(): Fixture {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), "hmmemt-plots-"));
    const n = 200;
    const h = 0.01;
    const header = "t,mode,x_D,x_Q,y\n";

    const baseRows: string[] = [];
    const hmmRows: string[] = [];
    let sumErr = 0;
    let sumRef = 0;
    for (let i = 0; i <= n; i++) {
        const t = i * h;
        const xd = Math.cos(t);
        const xq = Math.sin(t);
        const y = Math.exp(-t);
        baseRows.push(`${fmt(t)},micro,${fmt(xd)},${fmt(xq)},${fmt(y)}`);
        const yCand = y + 1e-3; // constant offset: rel_l2 has a closed form
        const mode = i % 10 === 0 ? "macro" : "micro";
        hmmRows.push(`${fmt(t)},${mode},${fmt(xd)},${fmt(xq)},${fmt(yCand)}`);
        sumErr += 1e-6;
        sumRef += y * y;
    }
    fs.writeFileSync(path.join(dir, "baseline.csv"), header + baseRows.join("\n") + "\n");
    fs.writeFileSync(path.join(dir, "hmm.csv"), header + hmmRows.join("\n") + "\n");

    const relL2x = Math.sqrt(sumErr / sumRef);
    const report = {
        wall_baseline_s: 2.0,
        wall_hmm_s: 1.4,
        speedup_pct: 30.0,
        predicted_step_ratio: 0.647,
        errors: {
            rel_l2: relL2x,
            max_abs: 1e-3,
            per_variable: { y: relL2x },
            interval: [0.0, n * h],
            n_matched: n + 1,
        },
        config: { outputs: { compare: ["y", "env(x)"] } },
    };
    fs.writeFileSync(path.join(dir, "bench_report.json"), JSON.stringify(report, null, 2));
    return { dir, relL2x };
}
