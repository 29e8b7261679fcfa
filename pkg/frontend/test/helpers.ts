// Boots the real Python game server for integration tests.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import WebSocket from "ws";

import type { WebSocketFactory } from "../src/net.js";

export const wsFactory: WebSocketFactory = (url) => new WebSocket(url) as never;

export interface LiveServer {
  baseUrl: string;
  joinToken: string;
  credential: string;
  stop(): void;
  frameB64: string;
}

const PY = process.env.PYTHON ?? "python3";

export async function startServer(): Promise<LiveServer> {
  const dir = mkdtempSync(join(tmpdir(), "bm-webui-"));
  const modelPath = join(dir, "net.bmn");
  const framePath = join(dir, "frame.jpg");

  let r = spawnSync(PY, ["-m", "breakable_machine.cli", "make-model",
    "--labels", "astronaut,bear,doctor", "--out", modelPath, "--seed", "3"]);
  if (r.status !== 0) throw new Error(`make-model failed: ${r.stderr}`);
  r = spawnSync(PY, ["-c",
    "import numpy as np; from PIL import Image; rng = np.random.default_rng(5); " +
    `Image.fromarray(rng.integers(0, 256, (64, 64, 3), dtype='uint8'), 'RGB').save(r'${framePath}', quality=90)`,
  ]);
  if (r.status !== 0) throw new Error(`frame fixture failed: ${r.stderr}`);
  const frameB64 = readFileSync(framePath).toString("base64");

  const proc: ChildProcess = spawn(PY, ["-m", "breakable_machine.cli", "serve",
    "--model", modelPath, "--bind", "127.0.0.1", "--port", "0",
    "--rate-limit", "0", "--log-file", join(dir, "server.log")], { cwd: dir });

  const info: Record<string, string> = {};
  await new Promise<void>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server did not announce")), 30000);
    let buf = "";
    proc.stdout!.on("data", (chunk) => {
      buf += String(chunk);
      for (const line of buf.split("\n")) {
        const m = /^(breakable-machine serving on|teacher credential:|student join url:) (\S+)$/.exec(line.trim());
        if (m) info[m[1]] = m[2];
      }
      if (info["breakable-machine serving on"] && info["teacher credential:"] && info["student join url:"]) {
        clearTimeout(timer);
        resolve();
      }
    });
    proc.on("exit", (code) => reject(new Error(`server exited early (${code})`)));
  });

  return {
    baseUrl: info["breakable-machine serving on"],
    credential: info["teacher credential:"],
    joinToken: info["student join url:"].split("/").pop()!,
    frameB64,
    stop: () => proc.kill("SIGTERM"),
  };
}
