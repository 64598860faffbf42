import { describe, expect, it, vi } from "vitest";

import type { JobView } from "../src/api.js";
import { pollJob } from "../src/poller.js";

function job(status: JobView["status"], extra: Partial<JobView> = {}): JobView {
  return { id: "j-1", session_id: "s-1", status, ...extra };
}

function recordingSleep(): { sleeps: number[]; sleep: (ms: number) => Promise<void> } {
  const sleeps: number[] = [];
  return {
    sleeps,
    sleep: (ms: number) => {
      sleeps.push(ms);
      return Promise.resolve();
    },
  };
}

describe("pollJob", () => {
  it("resolves when the job reaches done", async () => {
    const responses = [job("queued"), job("running"), job("done", { result: { candidate_ids: ["c-0000"] } })];
    const { sleeps, sleep } = recordingSleep();
    const statuses: string[] = [];
    const result = await pollJob(() => Promise.resolve(responses.shift()!), "j-1", {
      intervalMs: 100,
      sleep,
      onStatus: (s) => statuses.push(s),
    });
    expect(result.status).toBe("done");
    expect(result.result?.candidate_ids).toEqual(["c-0000"]);
    expect(statuses).toEqual(["queued", "running"]);
    expect(sleeps).toEqual([100, 100]);
  });

  it("returns a failed job instead of throwing", async () => {
    const result = await pollJob(() => Promise.resolve(job("failed", { error: "boom" })), "j-1", {
      sleep: () => Promise.resolve(),
    });
    expect(result.status).toBe("failed");
    expect(result.error).toBe("boom");
  });

  it("backs off exponentially across network errors and recovers", async () => {
    const spy = vi.spyOn(console, "error").mockImplementation(() => {});
    let call = 0;
    const { sleeps, sleep } = recordingSleep();
    const result = await pollJob(
      () => {
        call += 1;
        if (call <= 3) return Promise.reject(new Error("connection dropped"));
        if (call === 4) return Promise.resolve(job("running"));
        return Promise.resolve(job("done"));
      },
      "j-1",
      { intervalMs: 100, backoffFactor: 2, maxIntervalMs: 350, sleep }
    );
    expect(result.status).toBe("done");
    // three failures grow 200, 350 (capped), 350; the healthy read resets to 100
    expect(sleeps).toEqual([200, 350, 350, 100]);
    spy.mockRestore();
  });

  it("gives up after maxAttempts polls", async () => {
    const { sleep } = recordingSleep();
    await expect(
      pollJob(() => Promise.resolve(job("running")), "j-1", { maxAttempts: 5, sleep })
    ).rejects.toThrow(/did not finish within 5 polls/);
  });
});
