import type { AdjudicationResult, CandidateEntry, SessionView } from "./api.js";

// Client-side session state. Everything here is derived from server
// responses, so a page reload that re-fetches the session reconstructs
// the exact same state.

export interface ClientSession {
  id: string;
  imageB64: string;
  masks: SessionView["masks"];
  prompts: SessionView["prompts"];
  candidates: CandidateEntry[];
  acceptedCount: number;
}

export function sessionFromServer(view: SessionView): ClientSession {
  return {
    id: view.id,
    imageB64: view.image,
    masks: view.masks.map((m) => ({ ...m })),
    prompts: view.prompts.map((p) => ({ ...p })),
    candidates: view.candidates.map((c) => ({ ...c })),
    acceptedCount: view.accepted_count,
  };
}

/** Fold an accept/reject response into the session without refetching. */
export function applyAdjudication(session: ClientSession, result: AdjudicationResult): ClientSession {
  return {
    ...session,
    candidates: session.candidates.map((c) =>
      c.id === result.id ? { ...c, status: result.status } : c
    ),
    acceptedCount: result.accepted_count,
  };
}

export function latestMaskId(session: ClientSession): string | null {
  return session.masks.length ? session.masks[session.masks.length - 1].id : null;
}

export function latestPromptId(session: ClientSession): string | null {
  return session.prompts.length ? session.prompts[session.prompts.length - 1].id : null;
}

export function pendingCount(session: ClientSession): number {
  return session.candidates.filter((c) => c.status === "pending").length;
}
