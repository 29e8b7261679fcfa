// Webcam capture: keeps a live <video>, snapshots center-cropped square
// JPEG frames at the model's input size.

export class Camera {
  readonly video = document.createElement("video");
  private canvas = document.createElement("canvas");
  private stream: MediaStream | null = null;

  async start(): Promise<void> {
    this.stream = await navigator.mediaDevices.getUserMedia({
      video: { facingMode: "user", width: { ideal: 640 }, height: { ideal: 480 } },
      audio: false,
    });
    this.video.srcObject = this.stream;
    this.video.muted = true;
    this.video.playsInline = true;
    await this.video.play();
  }

  captureJpegB64(size: number, quality = 0.85): string | null {
    const vw = this.video.videoWidth;
    const vh = this.video.videoHeight;
    if (!vw || !vh) return null;
    this.canvas.width = size;
    this.canvas.height = size;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return null;
    const side = Math.min(vw, vh);
    ctx.drawImage(this.video, (vw - side) / 2, (vh - side) / 2, side, side, 0, 0, size, size);
    const dataUrl = this.canvas.toDataURL("image/jpeg", quality);
    return dataUrl.slice(dataUrl.indexOf(",") + 1);
  }

  stop(): void {
    this.stream?.getTracks().forEach((t) => t.stop());
    this.stream = null;
  }
}
