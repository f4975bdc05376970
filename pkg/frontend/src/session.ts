// Review session state: the queue, the current drafts, and progress counters.
//
// Single-page flow: the queue is walked front to back, skipping dialogues the
// rater has already handled this session; drafts live here so the DOM layer
// stays a thin renderer.

import { emptyDraft, type RatingDraft } from "./rating.js";
import { fromWire, serializeItems, type GoldItemDraft } from "./dsl.js";
import type { DialogueDetail, DialogueSummary } from "./types.js";

export interface SessionState {
  raterId: string;
  queue: DialogueSummary[];
  position: number;
  current: DialogueDetail | null;
  draft: RatingDraft;
  goldDrafts: Map<number, GoldItemDraft[]>;
  goldSaved: Map<number, string>; // canonical text of the last saved state per turn
  handled: Set<string>; // submitted or skipped this session
}

export function newSession(raterId: string, queue: DialogueSummary[]): SessionState {
  return {
    raterId,
    queue,
    position: -1,
    current: null,
    draft: emptyDraft(),
    goldDrafts: new Map(),
    goldSaved: new Map(),
    handled: new Set(),
  };
}

/** Index of the next queue entry still needing this rater's attention. */
export function nextPosition(state: SessionState): number {
  for (let i = state.position + 1; i < state.queue.length; i++) {
    const entry = state.queue[i]!;
    if (!state.handled.has(entry.id) && entry.ratings < entry.target_ratings) return i;
  }
  return -1;
}

export function beginReview(state: SessionState, position: number,
                            detail: DialogueDetail): SessionState {
  const goldDrafts = new Map<number, GoldItemDraft[]>();
  const goldSaved = new Map<number, string>();
  detail.dialogue.turns.forEach((turn, index) => {
    const saved = detail.gold?.turns[String(index)];
    const draft = saved ? fromWire(saved) : fromWire(turn.items);
    goldDrafts.set(index, draft);
    goldSaved.set(index, serializeItems(draft));
  });
  return {
    ...state,
    position,
    current: detail,
    draft: emptyDraft(),
    goldDrafts,
    goldSaved,
  };
}

export function markHandled(state: SessionState, dialogueId: string): SessionState {
  const handled = new Set(state.handled);
  handled.add(dialogueId);
  return { ...state, handled };
}

export function markGoldSaved(state: SessionState, turn: number): SessionState {
  const goldSaved = new Map(state.goldSaved);
  goldSaved.set(turn, serializeItems(state.goldDrafts.get(turn) ?? []));
  return { ...state, goldSaved };
}

/** True when the turn's gold draft differs from what the server has. */
export function hasUnsavedGold(state: SessionState, turn: number): boolean {
  const draft = state.goldDrafts.get(turn);
  if (draft === undefined) return false;
  return serializeItems(draft) !== (state.goldSaved.get(turn) ?? "");
}

export interface Progress {
  done: number;
  total: number;
}

export function progress(state: SessionState): Progress {
  const done = state.queue.filter(
    (entry) => state.handled.has(entry.id) || entry.ratings >= entry.target_ratings,
  ).length;
  return { done, total: state.queue.length };
}
