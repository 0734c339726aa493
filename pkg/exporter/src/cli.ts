/**
 * CLI: export SPSC score files (and optional GFEA features) for the
 * labeling pipeline, from its manifest and SPXM superpixel maps.
 */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { exportScores } from "./export.js";

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .command("export", "score superpixels and write SPSC/GFEA files", (y) =>
      y
        .option("manifest", { type: "string", demandOption: true })
        .option("spxm-dir", { type: "string", demandOption: true })
        .option("out", { type: "string", demandOption: true })
        .option("classes", { type: "number", demandOption: true })
        .option("main-k", { type: "number", default: 150 })
        .option("features", { type: "boolean", default: false })
        .option("model", { type: "string", describe: "tfjs-layers model directory" })
        .option("seed", { type: "number", default: 7 })
        .option("split", { choices: ["train", "test", "all"] as const, default: "all" as const })
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      throw err ?? new Error(msg);
    })
    .parse();

  const written = await exportScores({
    manifestPath: args.manifest as string,
    spxmDir: args["spxm-dir"] as string,
    outDir: args.out as string,
    nClasses: args.classes as number,
    mainK: args["main-k"] as number,
    features: args.features as boolean,
    modelDir: args.model as string | undefined,
    seed: args.seed as number,
    split: args.split as "train" | "test" | "all",
  });
  for (const p of written) {
    console.log(p);
  }
  return 0;
}

const isMain = process.argv[1] && process.argv[1].endsWith("cli.js");
if (isMain) {
  main(hideBin(process.argv))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(`exporter: ${err.message}`);
      process.exit(1);
    });
}
