// Training-dataset browsing over the server's gated HTTP endpoints.

export interface DatasetLabel {
  label: string;
  count: number;
}

export class DatasetClient {
  constructor(
    private auth: { session?: string; cred?: string },
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private qs(): string {
    const params = new URLSearchParams();
    if (this.auth.session) params.set("session", this.auth.session);
    if (this.auth.cred) params.set("cred", this.auth.cred);
    return params.toString();
  }

  async labels(): Promise<DatasetLabel[]> {
    const res = await this.fetchImpl(`/dataset?${this.qs()}`);
    if (!res.ok) throw new Error(`dataset locked or unavailable (${res.status})`);
    return (await res.json()).labels;
  }

  async images(label: string): Promise<string[]> {
    const res = await this.fetchImpl(`/dataset/${encodeURIComponent(label)}?${this.qs()}`);
    if (!res.ok) throw new Error(`dataset label unavailable (${res.status})`);
    return (await res.json()).images;
  }

  imageUrl(label: string, imageId: string): string {
    return `/dataset/${encodeURIComponent(label)}/${encodeURIComponent(imageId)}?${this.qs()}`;
  }
}
