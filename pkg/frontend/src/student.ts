// Student app: live camera with confidence readout, saliency overlay when
// the teacher enables it, and the (gated) training-data browser. The app
// transmits nothing but hello and frame_submit.

import { Camera } from "./camera.js";
import { StudentCore } from "./core.js";
import { DatasetClient } from "./dataset.js";
import { overlayRgba } from "./heatmap.js";
import { Connection, rtUrl } from "./net.js";
import { el } from "./ui.js";

const SUBMIT_INTERVAL_MS = 500; // 2 frames per second
const PREVIEW_PX = 448;

type Tab = "live" | "heatmap" | "dataset";

export async function runStudentApp(root: HTMLElement, joinToken: string): Promise<void> {
  root.replaceChildren(
    el("div", { class: "card join-card" }, [
      el("h1", {}, ["Join the game"]),
      el("input", { id: "name", placeholder: "Your name", maxlength: "32" }),
      el("button", { id: "go" }, ["Join"]),
      el("p", { id: "join-status", class: "status" }, [""]),
    ]),
  );
  const nameInput = root.querySelector<HTMLInputElement>("#name")!;
  const status = root.querySelector<HTMLElement>("#join-status")!;
  root.querySelector<HTMLButtonElement>("#go")!.onclick = async () => {
    const name = nameInput.value.trim();
    if (!name) {
      status.textContent = "enter a name first";
      return;
    }
    try {
      await startGame(root, joinToken, name);
    } catch (err) {
      status.textContent = String(err);
    }
  };
}

async function startGame(root: HTMLElement, joinToken: string, name: string): Promise<void> {
  const conn = new Connection(rtUrl(location.origin));
  const core = new StudentCore(conn);
  await conn.open();
  await core.join(joinToken, name);

  const camera = new Camera();
  await camera.start();

  const preview = el("canvas", { class: "preview", width: String(PREVIEW_PX), height: String(PREVIEW_PX) }) as HTMLCanvasElement;
  const confidence = el("div", { class: "confidence" }, ["0.0%"]);
  const bestLine = el("div", { class: "best" }, [""]);
  const challengeLine = el("div", { class: "challenge" }, [""]);
  const pausedBanner = el("div", { class: "paused hidden" }, ["Game paused"]);
  const tabs: Record<Tab, HTMLButtonElement> = {
    live: el("button", {}, ["Live"]) as HTMLButtonElement,
    heatmap: el("button", {}, ["Heat map"]) as HTMLButtonElement,
    dataset: el("button", {}, ["Training data"]) as HTMLButtonElement,
  };
  const datasetPanel = el("div", { class: "dataset hidden" });
  root.replaceChildren(
    el("div", { class: "student" }, [
      challengeLine,
      pausedBanner,
      preview,
      confidence,
      bestLine,
      el("div", { class: "tabs" }, [tabs.live, tabs.heatmap, tabs.dataset]),
      datasetPanel,
    ]),
  );

  let tab: Tab = "live";
  const selectTab = (t: Tab) => {
    tab = t;
    datasetPanel.classList.toggle("hidden", t !== "dataset");
    preview.classList.toggle("hidden", t === "dataset");
    for (const [k, b] of Object.entries(tabs)) b.classList.toggle("active", k === t);
    if (t === "dataset") void renderDataset();
  };
  tabs.live.onclick = () => selectTab("live");
  tabs.heatmap.onclick = () => {
    if (core.view().heatmapOn) selectTab("heatmap");
  };
  tabs.dataset.onclick = () => {
    if (core.view().datasetUnlocked) selectTab("dataset");
  };

  const overlayCanvas = document.createElement("canvas");
  overlayCanvas.width = PREVIEW_PX;
  overlayCanvas.height = PREVIEW_PX;

  const renderLoop = () => {
    const ctx = preview.getContext("2d")!;
    const v = camera.video;
    if (v.videoWidth) {
      const side = Math.min(v.videoWidth, v.videoHeight);
      ctx.drawImage(v, (v.videoWidth - side) / 2, (v.videoHeight - side) / 2, side, side, 0, 0, PREVIEW_PX, PREVIEW_PX);
    }
    const view = core.view();
    if (tab === "heatmap" && view.heatmapOn && view.camGrid) {
      const octx = overlayCanvas.getContext("2d")!;
      const rgba = overlayRgba(view.camGrid, 7, 7, PREVIEW_PX, PREVIEW_PX);
      octx.putImageData(new ImageData(rgba, PREVIEW_PX, PREVIEW_PX), 0, 0);
      ctx.drawImage(overlayCanvas, 0, 0);
    }
    requestAnimationFrame(renderLoop);
  };
  requestAnimationFrame(renderLoop);

  const inputSize = Math.max(16, core.state.shared?.input_size ?? 56);
  setInterval(() => {
    const view = core.view();
    if (view.paused || core.closed) return;
    const frame = camera.captureJpegB64(inputSize);
    if (frame) {
      core.offerFrame(frame);
      core.tick()?.catch(() => undefined);
    }
  }, SUBMIT_INTERVAL_MS);

  core.onUpdate = () => {
    const view = core.view();
    challengeLine.textContent = view.challengeName
      ? `Challenge: make the machine see “${view.challengeName}”`
      : "Waiting for a challenge";
    if (view.lastConfidence !== null) {
      confidence.textContent = `${(view.lastConfidence * 100).toFixed(1)}%`;
      confidence.classList.toggle("new-best", view.isNewBest);
    }
    bestLine.textContent = `personal best: ${(view.bestConfidence * 100).toFixed(1)}%`;
    pausedBanner.classList.toggle("hidden", !view.paused);
    tabs.heatmap.disabled = !view.heatmapOn;
    tabs.dataset.disabled = !view.datasetUnlocked;
    if (tab === "heatmap" && !view.heatmapOn) selectTab("live");
    if (tab === "dataset" && !view.datasetUnlocked) selectTab("live");
    if (core.byeReason) {
      root.replaceChildren(el("div", { class: "card" }, [
        el("h1", {}, ["Session ended"]),
        el("p", {}, ["All game data has been deleted. Thanks for playing!"]),
      ]));
      camera.stop();
    }
  };
  core.onUpdate();

  async function renderDataset(): Promise<void> {
    const ds = new DatasetClient({ session: core.view().sessionId });
    datasetPanel.replaceChildren(el("p", {}, ["loading…"]));
    try {
      const labels = await ds.labels();
      const picker = el("div", { class: "label-row" });
      const gallery = el("div", { class: "gallery" });
      for (const { label, count } of labels) {
        const b = el("button", {}, [`${label} (${count})`]) as HTMLButtonElement;
        b.onclick = async () => {
          const ids = await ds.images(label);
          gallery.replaceChildren(
            ...ids.map((id) => el("img", { src: ds.imageUrl(label, id), alt: label })),
          );
        };
        picker.append(b);
      }
      datasetPanel.replaceChildren(picker, gallery);
    } catch (err) {
      datasetPanel.replaceChildren(el("p", {}, [String(err)]));
    }
  }
}
