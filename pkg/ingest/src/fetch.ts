/**
 * Download the distribution files into a cache directory.  Idempotent: files
 * already in the cache are never re-fetched.  Downloads are checked for
 * emptiness and, when a pinned digest is known, for content.
 */

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as https from "node:https";
import * as path from "node:path";
import { SUFFIXES } from "./planetoid.js";

const BASE_URL = "https://raw.githubusercontent.com/kimiyoung/planetoid/master/data";

export const SUPPORTED = ["cora", "citeseer", "pubmed"] as const;

/** Pinned sha256 digests, filled in as files are first fetched and audited.
 * Empty entries skip the content check but still reject empty downloads. */
export const PINNED_SHA256: Record<string, string> = {};

export class FetchError extends Error {}

function download(url: string): Promise<Buffer> {
  return new Promise((resolve, reject) => {
    https
      .get(url, (res) => {
        if (res.statusCode !== 200) {
          res.resume();
          reject(new FetchError(`${url}: HTTP ${res.statusCode}`));
          return;
        }
        const chunks: Buffer[] = [];
        res.on("data", (chunk) => chunks.push(chunk));
        res.on("end", () => resolve(Buffer.concat(chunks)));
        res.on("error", (err) => reject(new FetchError(`${url}: ${err.message}`)));
      })
      .on("error", (err) => reject(new FetchError(`${url}: ${err.message}`)));
  });
}

export async function fetchDataset(name: string, cacheDir: string): Promise<string[]> {
  if (!(SUPPORTED as readonly string[]).includes(name)) {
    throw new FetchError(`unknown dataset '${name}'; supported: ${SUPPORTED.join(", ")}`);
  }
  fs.mkdirSync(cacheDir, { recursive: true });
  const fetched: string[] = [];
  for (const suffix of SUFFIXES) {
    const file = `ind.${name}.${suffix}`;
    const target = path.join(cacheDir, file);
    if (fs.existsSync(target) && fs.statSync(target).size > 0) {
      fetched.push(target);
      continue;
    }
    const url = `${BASE_URL}/${file}`;
    const body = await download(url);
    if (body.length === 0) throw new FetchError(`${url}: empty download`);
    const pinned = PINNED_SHA256[file];
    if (pinned) {
      const digest = createHash("sha256").update(body).digest("hex");
      if (digest !== pinned) throw new FetchError(`${url}: sha256 ${digest} != pinned ${pinned}`);
    }
    fs.writeFileSync(target, body);
    fetched.push(target);
  }
  return fetched;
}

export function cacheComplete(name: string, cacheDir: string): boolean {
  return SUFFIXES.every((suffix) => {
    const p = path.join(cacheDir, `ind.${name}.${suffix}`);
    return fs.existsSync(p) && fs.statSync(p).size > 0;
  });
}
