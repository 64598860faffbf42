import { describe, expect, it } from "vitest";

import type { SessionView } from "../src/api.js";
import {
  applyAdjudication,
  latestMaskId,
  latestPromptId,
  pendingCount,
  sessionFromServer,
} from "../src/state.js";

function view(overrides: Partial<SessionView> = {}): SessionView {
  return {
    id: "s-abc",
    created: "2026-01-01T00:00:00Z",
    image: "IMGB64",
    masks: [
      { id: "m-0000", mask: "M0" },
      { id: "m-0001", mask: "M1" },
    ],
    prompts: [{ id: "p-0000", text: "white marks", negative_text: "smooth", guidance_scale: 2.0 }],
    candidates: [
      { id: "c-0000", status: "pending", mask_id: "m-0001", prompt_id: "p-0000", seed: 0, image: "C0" },
      { id: "c-0001", status: "pending", mask_id: "m-0001", prompt_id: "p-0000", seed: 0, image: "C1" },
    ],
    accepted_count: 0,
    ...overrides,
  };
}

describe("sessionFromServer", () => {
  it("reconstructs every field from the server view", () => {
    const s = sessionFromServer(view());
    expect(s.id).toBe("s-abc");
    expect(s.imageB64).toBe("IMGB64");
    expect(s.masks.map((m) => m.id)).toEqual(["m-0000", "m-0001"]);
    expect(latestMaskId(s)).toBe("m-0001");
    expect(latestPromptId(s)).toBe("p-0000");
    expect(pendingCount(s)).toBe(2);
    expect(s.acceptedCount).toBe(0);
  });

  it("handles a fresh session with no content", () => {
    const s = sessionFromServer(view({ masks: [], prompts: [], candidates: [] }));
    expect(latestMaskId(s)).toBeNull();
    expect(latestPromptId(s)).toBeNull();
    expect(pendingCount(s)).toBe(0);
  });
});

describe("applyAdjudication", () => {
  it("matches the state a full reload would produce", () => {
    const before = sessionFromServer(view());
    const incremental = applyAdjudication(before, {
      id: "c-0000",
      status: "accepted",
      accepted_count: 1,
    });

    const reloaded = sessionFromServer(
      view({
        candidates: [
          { id: "c-0000", status: "accepted", mask_id: "m-0001", prompt_id: "p-0000", seed: 0, image: "C0" },
          { id: "c-0001", status: "pending", mask_id: "m-0001", prompt_id: "p-0000", seed: 0, image: "C1" },
        ],
        accepted_count: 1,
      })
    );
    expect(incremental).toEqual(reloaded);
  });

  it("does not mutate the previous state", () => {
    const before = sessionFromServer(view());
    applyAdjudication(before, { id: "c-0001", status: "rejected", accepted_count: 0 });
    expect(before.candidates[1].status).toBe("pending");
  });

  it("tracks accept then reject across candidates", () => {
    let s = sessionFromServer(view());
    s = applyAdjudication(s, { id: "c-0000", status: "accepted", accepted_count: 1 });
    s = applyAdjudication(s, { id: "c-0001", status: "rejected", accepted_count: 1 });
    expect(s.acceptedCount).toBe(1);
    expect(pendingCount(s)).toBe(0);
    expect(s.candidates.map((c) => c.status)).toEqual(["accepted", "rejected"]);
  });
});
