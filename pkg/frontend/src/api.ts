import type { ApplyRequest, ApplyResponse, EditSummary } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface EditServiceClient {
  listEdits(): Promise<EditSummary[]>;
  applyEdit(request: ApplyRequest): Promise<ApplyResponse>;
}

export function createClient(
  baseUrl: string,
  fetchImpl: FetchLike = fetch,
): EditServiceClient {
  const root = baseUrl.replace(/\/$/, "");

  const asJson = async (response: Response) => {
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // keep the status code as the detail
      }
      throw new Error(`service error: ${detail}`);
    }
    return response.json();
  };

  return {
    async listEdits() {
      return asJson(await fetchImpl(`${root}/edits`));
    },
    async applyEdit(request: ApplyRequest) {
      return asJson(
        await fetchImpl(`${root}/apply`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(request),
        }),
      );
    },
  };
}
