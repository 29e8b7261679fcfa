// Teacher app: projector user grid, leaderboard with the reveal policy,
// QR join code, and the control panel.

import { TeacherCore } from "./core.js";
import { Connection, rtUrl } from "./net.js";
import { el, jpegSrc } from "./ui.js";

// global from /static/vendor/qrcode.js (qrcode-generator UMD build)
declare const qrcode: (typeNumber: number, errorCorrection: string) => {
  addData(data: string): void;
  make(): void;
  getModuleCount(): number;
  isDark(row: number, col: number): boolean;
};

function drawQr(canvas: HTMLCanvasElement, text: string, sizePx = 220): void {
  const qr = qrcode(0, "M");
  qr.addData(text);
  qr.make();
  const n = qr.getModuleCount();
  const quiet = 4;
  const cell = Math.max(1, Math.floor(sizePx / (n + 2 * quiet)));
  const side = cell * (n + 2 * quiet);
  canvas.width = side;
  canvas.height = side;
  const ctx = canvas.getContext("2d")!;
  ctx.fillStyle = "#fff";
  ctx.fillRect(0, 0, side, side);
  ctx.fillStyle = "#000";
  for (let r = 0; r < n; r++) {
    for (let c = 0; c < n; c++) {
      if (qr.isDark(r, c)) {
        ctx.fillRect((c + quiet) * cell, (r + quiet) * cell, cell, cell);
      }
    }
  }
}

export async function runTeacherApp(root: HTMLElement): Promise<void> {
  root.replaceChildren(
    el("div", { class: "card join-card" }, [
      el("h1", {}, ["Teacher console"]),
      el("p", {}, ["Paste the credential printed on the server console."]),
      el("input", { id: "cred", placeholder: "teacher credential" }),
      el("button", { id: "go" }, ["Connect"]),
      el("p", { id: "status", class: "status" }, [""]),
    ]),
  );
  const credInput = root.querySelector<HTMLInputElement>("#cred")!;
  const status = root.querySelector<HTMLElement>("#status")!;
  root.querySelector<HTMLButtonElement>("#go")!.onclick = async () => {
    try {
      await startConsole(root, credInput.value.trim());
    } catch (err) {
      status.textContent = String(err);
    }
  };
}

async function startConsole(root: HTMLElement, credential: string): Promise<void> {
  const conn = new Connection(rtUrl(location.origin));
  const core = new TeacherCore(conn);
  await conn.open();
  await core.join(credential);

  const qrCanvas = document.createElement("canvas");
  const joinLine = el("div", { class: "join-url" }, [core.joinUrl]);
  const grid = el("div", { class: "user-grid" });
  const board = el("ol", { class: "board" });
  const selectedInfo = el("span", { class: "selected-info" }, ["everyone"]);

  const challengeSelect = el("select", { id: "challenge" }) as HTMLSelectElement;
  for (const [i, label] of core.labels().entries()) {
    const opt = el("option", { value: String(i) }, [label]) as HTMLOptionElement;
    challengeSelect.append(opt);
  }
  const applyChallenge = el("button", {}, ["Set challenge"]) as HTMLButtonElement;
  const pauseBtn = el("button", {}, ["Pause"]) as HTMLButtonElement;
  const revealInput = el("input", { id: "reveal", value: "hidden", size: "6" }) as HTMLInputElement;
  const revealBtn = el("button", {}, ["Set reveal"]) as HTMLButtonElement;
  const heatmapToggle = el("input", { type: "checkbox", id: "heatmap" }) as HTMLInputElement;
  const datasetToggle = el("input", { type: "checkbox", id: "dataset" }) as HTMLInputElement;
  const endBtn = el("button", { class: "danger" }, ["End session"]) as HTMLButtonElement;

  const selected = new Set<string>();

  root.replaceChildren(
    el("div", { class: "teacher" }, [
      el("div", { class: "side" }, [
        el("h2", {}, ["Join"]),
        qrCanvas,
        joinLine,
        el("h2", {}, ["Controls"]),
        el("div", { class: "controls" }, [
          el("div", {}, [challengeSelect, applyChallenge, el("span", {}, [" for "]), selectedInfo]),
          el("div", {}, [pauseBtn]),
          el("div", {}, [revealInput, revealBtn]),
          el("label", {}, [heatmapToggle, " heat maps on all devices"]),
          el("label", {}, [datasetToggle, " unlock training data"]),
          el("div", {}, [endBtn]),
        ]),
      ]),
      el("div", { class: "main" }, [
        el("h2", {}, ["Players"]),
        grid,
        el("h2", {}, ["Top scores"]),
        board,
      ]),
    ]),
  );

  drawQr(qrCanvas, core.joinUrl);

  applyChallenge.onclick = () =>
    core.setChallenge(Number(challengeSelect.value), selected.size ? [...selected] : "all");
  pauseBtn.onclick = () => core.setPause(!(core.state.shared?.paused ?? false));
  revealBtn.onclick = () => {
    const raw = revealInput.value.trim();
    core.setReveal(raw === "hidden" ? "hidden" : Math.max(0, Number(raw) || 0));
  };
  heatmapToggle.onchange = () => core.setHeatmap(heatmapToggle.checked);
  datasetToggle.onchange = () => core.setDatasetUnlock(datasetToggle.checked);
  endBtn.onclick = () => {
    if (confirm("End the session and delete all game data?")) core.endSession();
  };

  core.onUpdate = () => {
    const s = core.state.shared;
    if (!s) return;
    pauseBtn.textContent = s.paused ? "Resume" : "Pause";
    heatmapToggle.checked = s.heatmap_enabled;
    datasetToggle.checked = s.dataset_unlocked;
    selectedInfo.textContent = selected.size ? `${selected.size} selected` : "everyone";

    grid.replaceChildren(
      ...s.roster.map((p) => {
        const tile = el("div", { class: "tile" + (selected.has(p.player_id) ? " selected" : "") }, [
          p.avatar
            ? (el("img", { src: jpegSrc(p.avatar), alt: "" }) as HTMLElement)
            : el("div", { class: "avatar-placeholder" }, [p.display_name[0] ?? "?"]),
          el("div", { class: "tile-name" }, [p.display_name]),
        ]);
        tile.onclick = () => {
          if (selected.has(p.player_id)) selected.delete(p.player_id);
          else selected.add(p.player_id);
          core.onUpdate?.();
        };
        return tile;
      }),
    );

    board.replaceChildren(
      ...core.board().map((entry) =>
        el("li", { class: "board-row" }, [
          entry.thumbnail
            ? (el("img", { src: jpegSrc(entry.thumbnail), alt: "" }) as HTMLElement)
            : el("div", { class: "thumb-placeholder" }),
          el("span", { class: "board-name" }, [entry.display_name]),
          el("span", { class: "board-score" }, [
            entry.confidence !== undefined ? `${(entry.confidence * 100).toFixed(1)}%` : "—",
          ]),
        ]),
      ),
    );

    if (core.byeReason) {
      root.replaceChildren(el("div", { class: "card" }, [
        el("h1", {}, ["Session ended"]),
        el("p", {}, ["All player data was purged. Restart the server for a new session."]),
      ]));
    }
  };
  core.onUpdate();
}
