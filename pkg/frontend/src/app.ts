/**
 * Interactive mask-drawing editor.
 *
 * Upload an image, paint holes with the brush or rectangle tool, submit to
 * the inpainting service, inspect the result (optionally the intermediate
 * pyramid stages), and feed the result back as the next input.
 */

import { InpaintClient, ApiError, pngDataUrl } from "./api.js";
import { MaskLayer, Point } from "./mask.js";

type Tool = "brush" | "rect";

interface HistoryEntry {
  maskUrl: string; // data URL of the submitted mask
  resultUrl: string; // data URL of the returned result
}

function blobToDataUrl(blob: Blob): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(String(reader.result));
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(blob);
  });
}

class EditorApp {
  private client = new InpaintClient("");
  private image: HTMLImageElement | null = null;
  private mask: MaskLayer | null = null;
  private tool: Tool = "brush";
  private brushPx = 24;
  private stroke: Point[] = [];
  private rectStart: Point | null = null;
  private pending = false;
  private history: HistoryEntry[] = [];

  private canvas = document.getElementById("editor") as HTMLCanvasElement;
  private ctx = this.canvas.getContext("2d")!;
  private resultImg = document.getElementById("result") as HTMLImageElement;
  private ratioLabel = document.getElementById("ratio")!;
  private errorBanner = document.getElementById("error")!;
  private submitBtn = document.getElementById("submit") as HTMLButtonElement;
  private undoBtn = document.getElementById("undo") as HTMLButtonElement;
  private clearBtn = document.getElementById("clear") as HTMLButtonElement;
  private iterateBtn = document.getElementById("iterate") as HTMLButtonElement;
  private brushInput = document.getElementById("brush-size") as HTMLInputElement;
  private toolSelect = document.getElementById("tool") as HTMLSelectElement;
  private pyramidToggle = document.getElementById("show-pyramid") as HTMLInputElement;
  private pyramidRow = document.getElementById("pyramid")!;
  private historyRow = document.getElementById("history")!;
  private fileInput = document.getElementById("file") as HTMLInputElement;

  constructor() {
    this.fileInput.addEventListener("change", () => this.onFile());
    this.brushInput.addEventListener("input", () => {
      this.brushPx = Number(this.brushInput.value);
    });
    this.toolSelect.addEventListener("change", () => {
      this.tool = this.toolSelect.value as Tool;
    });
    this.undoBtn.addEventListener("click", () => {
      this.mask?.undo();
      this.redraw();
    });
    this.clearBtn.addEventListener("click", () => {
      this.mask?.clear();
      this.redraw();
    });
    this.submitBtn.addEventListener("click", () => void this.submit());
    this.iterateBtn.addEventListener("click", () => void this.useResultAsInput());

    this.canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    this.canvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    this.canvas.addEventListener("pointerup", (e) => this.onPointerUp(e));

    void this.client.modelInfo().then((info) => {
      const label = document.getElementById("model-info");
      if (label) {
        label.textContent = `${info.params_millions.toFixed(1)}M params, ${info.gflops.toFixed(1)} GFLOPs`;
      }
    }).catch(() => undefined);
  }

  private onFile(): void {
    const file = this.fileInput.files?.[0];
    if (!file) return;
    const url = URL.createObjectURL(file);
    const img = new Image();
    img.onload = () => {
      this.setImage(img);
      URL.revokeObjectURL(url);
    };
    img.src = url;
  }

  private setImage(img: HTMLImageElement): void {
    this.image = img;
    this.mask = new MaskLayer(img.naturalWidth, img.naturalHeight);
    this.canvas.width = img.naturalWidth;
    this.canvas.height = img.naturalHeight;
    this.history = [];
    this.redraw();
  }

  private canvasPoint(e: PointerEvent): Point {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: ((e.clientX - rect.left) / rect.width) * this.canvas.width,
      y: ((e.clientY - rect.top) / rect.height) * this.canvas.height,
    };
  }

  private onPointerDown(e: PointerEvent): void {
    if (!this.mask) return;
    this.canvas.setPointerCapture(e.pointerId);
    const p = this.canvasPoint(e);
    if (this.tool === "brush") {
      this.stroke = [p];
    } else {
      this.rectStart = p;
    }
  }

  private onPointerMove(e: PointerEvent): void {
    if (!this.mask) return;
    if (this.tool === "brush" && this.stroke.length > 0) {
      this.stroke.push(this.canvasPoint(e));
      this.redraw(this.stroke);
    }
  }

  private onPointerUp(e: PointerEvent): void {
    if (!this.mask) return;
    const p = this.canvasPoint(e);
    if (this.tool === "brush" && this.stroke.length > 0) {
      this.mask.paintStroke(this.stroke, this.brushPx);
      this.stroke = [];
    } else if (this.tool === "rect" && this.rectStart) {
      this.mask.paintRect(this.rectStart, p);
      this.rectStart = null;
    }
    this.redraw();
  }

  private redraw(liveStroke?: Point[]): void {
    if (!this.image || !this.mask) return;
    this.ctx.drawImage(this.image, 0, 0);
    const overlay = new ImageData(this.mask.toOverlayRgba(), this.mask.width, this.mask.height);
    void createImageBitmap(overlay).then((bmp) => {
      this.ctx.drawImage(bmp, 0, 0);
      if (liveStroke && liveStroke.length > 1) {
        this.ctx.strokeStyle = "rgba(255,0,0,0.5)";
        this.ctx.lineWidth = this.brushPx;
        this.ctx.lineCap = "round";
        this.ctx.beginPath();
        this.ctx.moveTo(liveStroke[0].x, liveStroke[0].y);
        for (const q of liveStroke.slice(1)) this.ctx.lineTo(q.x, q.y);
        this.ctx.stroke();
      }
      const ratio = this.mask!.holeRatio();
      this.ratioLabel.textContent = `hole ${(ratio * 100).toFixed(1)}% (bin ${this.mask!.bin()})`;
    });
  }

  private exportMaskBlob(): Promise<Blob> {
    const mask = this.mask!;
    const canvas = document.createElement("canvas");
    canvas.width = mask.width;
    canvas.height = mask.height;
    const ctx = canvas.getContext("2d")!;
    ctx.putImageData(new ImageData(mask.toExportRgba(), mask.width, mask.height), 0, 0);
    return new Promise((resolve, reject) => {
      canvas.toBlob((b) => (b ? resolve(b) : reject(new Error("mask encode failed"))), "image/png");
    });
  }

  private exportImageBlob(): Promise<Blob> {
    const img = this.image!;
    const canvas = document.createElement("canvas");
    canvas.width = img.naturalWidth;
    canvas.height = img.naturalHeight;
    canvas.getContext("2d")!.drawImage(img, 0, 0);
    return new Promise((resolve, reject) => {
      canvas.toBlob((b) => (b ? resolve(b) : reject(new Error("image encode failed"))), "image/png");
    });
  }

  private showError(message: string): void {
    this.errorBanner.textContent = message;
    this.errorBanner.classList.remove("hidden");
  }

  private async submit(): Promise<void> {
    if (!this.image || !this.mask || this.pending) return;
    this.pending = true;
    this.submitBtn.disabled = true;
    this.errorBanner.classList.add("hidden");
    try {
      const [imageBlob, maskBlob] = await Promise.all([this.exportImageBlob(), this.exportMaskBlob()]);
      const result = await this.client.inpaint(imageBlob, maskBlob, {
        composite: true,
        returnPyramid: this.pyramidToggle.checked,
      });
      this.resultImg.src = pngDataUrl(result.result_png);
      this.iterateBtn.disabled = false;
      // session history is append-only: one (mask, result) pair per submit
      this.history.push({
        maskUrl: await blobToDataUrl(maskBlob),
        resultUrl: this.resultImg.src,
      });
      this.renderHistory();
      this.pyramidRow.innerHTML = "";
      if (result.pyramid_png) {
        for (const [stage, png] of Object.entries(result.pyramid_png)) {
          const thumb = new Image();
          thumb.src = pngDataUrl(png);
          thumb.title = `${stage}x${stage}`;
          thumb.className = "pyramid-thumb";
          this.pyramidRow.appendChild(thumb);
        }
      }
      const server = result.hole_ratio ?? 0;
      const client = this.mask.holeRatio();
      if (Math.abs(server - client) > 0.001) {
        this.showError(`hole-ratio drift: client ${client.toFixed(4)} vs server ${server.toFixed(4)}`);
      }
    } catch (err) {
      if (err instanceof ApiError) {
        this.showError(`${err.code}: ${err.message}`);
      } else {
        this.showError(String(err));
      }
    } finally {
      this.pending = false;
      this.submitBtn.disabled = false;
    }
  }

  private renderHistory(): void {
    this.historyRow.innerHTML = "";
    for (const [i, entry] of this.history.entries()) {
      for (const [src, kind] of [[entry.maskUrl, "mask"], [entry.resultUrl, "result"]]) {
        const thumb = new Image();
        thumb.src = src;
        thumb.title = `${kind} ${i + 1}`;
        thumb.className = "history-thumb";
        this.historyRow.appendChild(thumb);
      }
    }
  }

  /** The interactive loop: the inpainted result becomes the next input. */
  private async useResultAsInput(): Promise<void> {
    if (!this.resultImg.src) return;
    const img = new Image();
    img.onload = () => this.setImage(img);
    img.src = this.resultImg.src;
  }
}

new EditorApp();
