/** Typed client for the inpainting service. */

export interface InpaintResult {
  result_png: string;
  pyramid_png: Record<string, string> | null;
  hole_ratio: number | null;
  bin: string | null;
  latency_ms: number;
  width: number;
  height: number;
}

export interface ModelInfo {
  params: number;
  params_millions: number;
  gflops: number;
  stages: number[];
  blind: boolean;
}

export interface InpaintOptions {
  composite?: boolean;
  returnPyramid?: boolean;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class InpaintClient {
  constructor(readonly baseUrl: string = "") {}

  async health(): Promise<boolean> {
    const resp = await fetch(`${this.baseUrl}/healthz`);
    return resp.ok;
  }

  async modelInfo(): Promise<ModelInfo> {
    const resp = await fetch(`${this.baseUrl}/model`);
    if (!resp.ok) throw new ApiError(resp.status, "model_info_failed", await resp.text());
    return (await resp.json()) as ModelInfo;
  }

  async inpaint(image: Blob, mask: Blob, opts: InpaintOptions = {}): Promise<InpaintResult> {
    const form = new FormData();
    form.append("image", image, "image.png");
    form.append("mask", mask, "mask.png");
    form.append("composite", String(opts.composite ?? true));
    form.append("return_pyramid", String(opts.returnPyramid ?? false));
    const resp = await fetch(`${this.baseUrl}/inpaint`, { method: "POST", body: form });
    if (!resp.ok) {
      let code = "request_failed";
      let message = `inpaint failed with status ${resp.status}`;
      try {
        const body = await resp.json();
        if (body?.detail?.code) {
          code = body.detail.code;
          message = body.detail.message ?? message;
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(resp.status, code, message);
    }
    return (await resp.json()) as InpaintResult;
  }
}

export function pngDataUrl(base64: string): string {
  return `data:image/png;base64,${base64}`;
}
