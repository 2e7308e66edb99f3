import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, OfflineError } from "../src/api.js";
import { MockService } from "./mockService.js";

describe("ApiClient", () => {
  it("parses successful responses", async () => {
    const service = new MockService();
    const api = new ApiClient("", service.fetch);
    expect(await api.health()).toEqual({ status: "ok" });
    const { data_id } = await api.uploadData("a,b\n1,2\n");
    expect(data_id).toBe("d1");
  });

  it("raises ApiError with the body on http failures", async () => {
    const service = new MockService();
    const api = new ApiClient("", service.fetch);
    await expect(api.runStatus("missing")).rejects.toThrow(ApiError);
    await expect(api.runStatus("missing")).rejects.toThrow(/unknown run/);
  });

  it("raises OfflineError when the service is unreachable", async () => {
    const service = new MockService();
    service.offline = true;
    const api = new ApiClient("", service.fetch);
    await expect(api.health()).rejects.toThrow(OfflineError);
  });
});
