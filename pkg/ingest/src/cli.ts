/**
 * Usage:
 *   ingest <name> --cache <dir> --out <dir> [--verify-only]
 *
 * Fetches (or reuses) the raw distribution files, converts them to the
 * canonical CSV layout, and verifies the emitted directory against both the
 * manifest and the published dataset counts.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { convert, Manifest } from "./convert.js";
import { cacheComplete, fetchDataset, SUPPORTED } from "./fetch.js";
import { assemble } from "./planetoid.js";
import { verify, verifyExpectedCounts } from "./verify.js";

function parseArgs(argv: string[]) {
  const [name, ...rest] = argv;
  const opts: Record<string, string | boolean> = {};
  for (let i = 0; i < rest.length; i++) {
    const arg = rest[i];
    if (arg === "--verify-only") opts.verifyOnly = true;
    else if (arg === "--cache" || arg === "--out") opts[arg.slice(2)] = rest[++i];
    else throw new Error(`unknown argument '${arg}'`);
  }
  if (!name) throw new Error(`usage: ingest <${SUPPORTED.join("|")}> --cache <dir> --out <dir>`);
  return { name, cache: String(opts.cache ?? "cache"), out: String(opts.out ?? `out/${name}`),
           verifyOnly: Boolean(opts.verifyOnly) };
}

export async function main(argv: string[]): Promise<number> {
  const { name, cache, out, verifyOnly } = parseArgs(argv);

  if (verifyOnly) {
    const manifestPath = path.join(out, "manifest.json");
    if (!fs.existsSync(manifestPath)) {
      console.error(`${manifestPath}: missing; run a conversion first`);
      return 2;
    }
    const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf-8")) as Manifest;
    const report = verify(out, manifest);
    const countFailures = verifyExpectedCounts(name, manifest);
    for (const failure of [...report.failures, ...countFailures]) console.error(failure);
    console.log(
      `${name}: n=${report.counts.n} d=${report.counts.d} c=${report.counts.c} ` +
        `edges=${report.counts.edges} -> ${report.ok && !countFailures.length ? "PASS" : "FAIL"}`,
    );
    return report.ok && countFailures.length === 0 ? 0 : 1;
  }

  if (!cacheComplete(name, cache)) {
    console.log(`fetching ${name} into ${cache} ...`);
    await fetchDataset(name, cache);
  } else {
    console.log(`cache hit for ${name}; no network access needed`);
  }

  const graph = assemble(cache, name);
  const manifest = convert(graph, out);
  const report = verify(out, manifest);
  const countFailures = verifyExpectedCounts(name, manifest);
  for (const failure of [...report.failures, ...countFailures]) console.error(failure);
  console.log(
    `${name}: n=${manifest.n} d=${manifest.d} c=${manifest.c} edges=${manifest.edges} ` +
      `featureless=${manifest.featureless} -> ${out}`,
  );
  return report.ok && countFailures.length === 0 ? 0 : 1;
}

const invokedDirectly =
  process.argv[1] && path.resolve(process.argv[1]) === new URL(import.meta.url).pathname;
if (invokedDirectly) {
  main(process.argv.slice(2))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(String(err.message ?? err));
      process.exit(2);
    });
}
