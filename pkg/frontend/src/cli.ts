#!/usr/bin/env node
/** render --run <dir> --figs all|overlay|envelope|error --vars <csv-names> [--out <dir>] */

import { FigureSet, render } from "./render";

function usage(): never {
    console.error(
        "usage: hmmemt-plots render --run <dir> [--figs all|overlay|envelope|error] " +
            "[--vars name1,name2,...] [--out <dir>]",
    );
    process.exit(1);
}

export function main(argv: string[]): number {
    if (argv[0] !== "render") usage();
    let runDir: string | null = null;
    let figures: FigureSet = "all";
    let variables: string[] = [];
    let outDir: string | undefined;
    for (let i = 1; i < argv.length; i += 2) {
        const key = argv[i];
        const value = argv[i + 1];
        if (value === undefined) usage();
        if (key === "--run") runDir = value;
        else if (key === "--figs") {
            if (!["all", "overlay", "envelope", "error"].includes(value)) usage();
            figures = value as FigureSet;
        } else if (key === "--vars") variables = value.split(",").filter((s) => s.length > 0);
        else if (key === "--out") outDir = value;
        else usage();
    }
    if (runDir === null) usage();
    try {
        const files = render({ runDir, figures, variables, outDir });
        for (const f of files) console.log(f);
    } catch (err) {
        console.error(`error: ${(err as Error).message}`);
        return 1;
    }
    return 0;
}

if (require.main === module) {
    process.exit(main(process.argv.slice(2)));
}
