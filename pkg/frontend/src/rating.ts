// Rating draft state and the conditional-criteria gating rules.
//
// A draft is submittable exactly when every required answer is present and
// the C-2 gate holds: C-2-1/C-2-2 are required when C-2 is yes and must be
// absent when C-2 is no. Likert answers are integers 1..5, no half points.

import type { RatingPayload } from "./types.js";

export interface RatingDraft {
  c0: boolean | null;
  c1: number | null;
  c2: boolean | null;
  c2_1: number | null;
  c2_2: number | null;
  c3: number | null;
  c4: number | null;
  c5: number | null;
}

export const LIKERT_KEYS = ["c1", "c3", "c4", "c5"] as const;

export function emptyDraft(): RatingDraft {
  return { c0: null, c1: null, c2: null, c2_1: null, c2_2: null, c3: null, c4: null, c5: null };
}

function validLikert(value: number | null): value is number {
  return value !== null && Number.isInteger(value) && value >= 1 && value <= 5;
}

/** Human-readable reasons the draft cannot be submitted; empty when valid. */
export function draftProblems(draft: RatingDraft): string[] {
  const problems: string[] = [];
  if (draft.c0 === null) problems.push("C-0 is unanswered");
  for (const key of LIKERT_KEYS) {
    if (!validLikert(draft[key])) problems.push(`${key.toUpperCase()} needs a 1-5 answer`);
  }
  if (draft.c2 === null) {
    problems.push("C-2 is unanswered");
  } else if (draft.c2) {
    if (!validLikert(draft.c2_1)) problems.push("C-2-1 is required when C-2 is yes");
    if (!validLikert(draft.c2_2)) problems.push("C-2-2 is required when C-2 is yes");
  } else if (draft.c2_1 !== null || draft.c2_2 !== null) {
    problems.push("C-2-1/C-2-2 must be empty when C-2 is no");
  }
  return problems;
}

export function isSubmittable(draft: RatingDraft): boolean {
  return draftProblems(draft).length === 0;
}

/** Flip C-2; answering no clears the conditional answers so the gate holds. */
export function setC2(draft: RatingDraft, value: boolean): RatingDraft {
  if (value) return { ...draft, c2: true };
  return { ...draft, c2: false, c2_1: null, c2_2: null };
}

export function toPayload(draft: RatingDraft, raterId: string): RatingPayload {
  if (!isSubmittable(draft)) {
    throw new Error(`draft not submittable: ${draftProblems(draft).join("; ")}`);
  }
  const payload: RatingPayload = {
    rater_id: raterId,
    c0: draft.c0!,
    c1: draft.c1!,
    c2: draft.c2!,
    c3: draft.c3!,
    c4: draft.c4!,
    c5: draft.c5!,
  };
  if (draft.c2) {
    payload.c2_1 = draft.c2_1!;
    payload.c2_2 = draft.c2_2!;
  }
  return payload;
}
