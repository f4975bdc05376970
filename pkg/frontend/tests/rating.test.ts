import { describe, expect, it } from "vitest";

import {
  draftProblems,
  emptyDraft,
  isSubmittable,
  setC2,
  toPayload,
  type RatingDraft,
} from "../src/rating.js";

function validDraft(overrides: Partial<RatingDraft> = {}): RatingDraft {
  return { c0: true, c1: 4, c2: false, c2_1: null, c2_2: null, c3: 4, c4: 5, c5: 5, ...overrides };
}

describe("rating draft gating", () => {
  it("empty draft is not submittable", () => {
    expect(isSubmittable(emptyDraft())).toBe(false);
  });

  it("complete draft with c2=no is submittable", () => {
    expect(isSubmittable(validDraft())).toBe(true);
    expect(draftProblems(validDraft())).toEqual([]);
  });

  it("c2=yes requires both conditional answers", () => {
    const base = validDraft({ c2: true });
    expect(isSubmittable(base)).toBe(false);
    expect(isSubmittable({ ...base, c2_1: 3 })).toBe(false);
    expect(isSubmittable({ ...base, c2_1: 3, c2_2: 4 })).toBe(true);
  });

  it("c2=no forbids conditional answers", () => {
    expect(isSubmittable(validDraft({ c2_1: 3 }))).toBe(false);
    expect(draftProblems(validDraft({ c2_1: 3 }))).toContain(
      "C-2-1/C-2-2 must be empty when C-2 is no");
  });

  it("likert answers must be integers in 1..5", () => {
    expect(isSubmittable(validDraft({ c1: 0 }))).toBe(false);
    expect(isSubmittable(validDraft({ c1: 6 }))).toBe(false);
    expect(isSubmittable(validDraft({ c4: 3.5 }))).toBe(false);
  });

  it("every single missing answer blocks submission", () => {
    for (const key of ["c0", "c1", "c2", "c3", "c4", "c5"] as const) {
      const draft = { ...validDraft(), [key]: null };
      expect(isSubmittable(draft), `missing ${key}`).toBe(false);
    }
  });

  it("setC2(false) clears the conditionals so the gate always holds", () => {
    const yes = { ...validDraft({ c2: true, c2_1: 4, c2_2: 5 }) };
    const no = setC2(yes, false);
    expect(no.c2_1).toBeNull();
    expect(no.c2_2).toBeNull();
    expect(isSubmittable(no)).toBe(true);
  });

  it("payload omits conditionals when c2 is no and includes them when yes", () => {
    const no = toPayload(validDraft(), "r1");
    expect("c2_1" in no).toBe(false);
    expect(no.rater_id).toBe("r1");
    const yes = toPayload(validDraft({ c2: true, c2_1: 2, c2_2: 3 }), "r1");
    expect(yes.c2_1).toBe(2);
    expect(yes.c2_2).toBe(3);
  });

  it("toPayload refuses invalid drafts", () => {
    expect(() => toPayload(emptyDraft(), "r1")).toThrow();
  });
});
