// Application entry point: queue -> review -> next, all against the review API.

import { getDialogue, getOntology, listDialogues, postSkip, putGold, putRating, ApiError } from "./api.js";
import { renderDialoguePanel, renderEmailPanel, renderProgress, renderRatingForm, el } from "./dom.js";
import { toPayload, type RatingDraft } from "./rating.js";
import { itemsValid, toWire, type GoldItemDraft } from "./dsl.js";
import {
  beginReview,
  hasUnsavedGold,
  markGoldSaved,
  markHandled,
  newSession,
  nextPosition,
  progress,
  type SessionState,
} from "./session.js";
import type { Ontology } from "./types.js";

let state: SessionState;
let ontology: Ontology;
const goldErrors = new Map<number, string | null>();

function query(selector: string): HTMLElement {
  const node = document.querySelector<HTMLElement>(selector);
  if (!node) throw new Error(`missing element ${selector}`);
  return node;
}

function raterId(): string {
  let id = window.localStorage.getItem("rater_id");
  if (!id) {
    id = window.prompt("Your rater id:")?.trim() || `rater-${Date.now()}`;
    window.localStorage.setItem("rater_id", id);
  }
  return id;
}

function render(): void {
  const { done, total } = progress(state);
  renderProgress(query("#progress"), done, total, state.raterId);
  if (!state.current) {
    const main = query("#panels");
    main.textContent = "";
    main.appendChild(el("div", "all-done",
      total === 0 ? "No dialogues in this split." : "All dialogues handled. Thank you!"));
    query("#rating").textContent = "";
    return;
  }
  renderEmailPanel(query("#email"), state.current);
  renderDialoguePanel(query("#dialogue"), state.current, ontology, {
    draftFor: (turn) => state.goldDrafts.get(turn) ?? [],
    unsaved: (turn) => hasUnsavedGold(state, turn),
    errorFor: (turn) => goldErrors.get(turn) ?? null,
  }, { onEdit: editGold, onSave: saveGold });
  renderRatingForm(query("#rating"), state.draft, {
    onChange: changeDraft,
    onSubmit: submitRating,
    onSkip: skipDialogue,
  });
}

function changeDraft(draft: RatingDraft): void {
  state = { ...state, draft };
  render();
}

function editGold(turn: number, items: GoldItemDraft[]): void {
  const goldDrafts = new Map(state.goldDrafts);
  goldDrafts.set(turn, items);
  state = { ...state, goldDrafts };
  goldErrors.set(turn, null);
  render();
}

async function saveGold(turn: number): Promise<void> {
  if (!state.current) return;
  const items = state.goldDrafts.get(turn) ?? [];
  if (!itemsValid(items, ontology)) return;
  try {
    await putGold(state.current.dialogue.id, turn, state.raterId, toWire(items));
    state = markGoldSaved(state, turn);
    goldErrors.set(turn, null);
  } catch (error) {
    goldErrors.set(turn, error instanceof ApiError
      ? `${error.code}: ${error.message}` : String(error));
  }
  render();
}

async function submitRating(): Promise<void> {
  if (!state.current) return;
  const dialogueId = state.current.dialogue.id;
  try {
    await putRating(dialogueId, toPayload(state.draft, state.raterId));
  } catch (error) {
    const hint = query("#rating-problems");
    hint.textContent = error instanceof ApiError
      ? `${error.code}: ${error.message}` : String(error);
    return;
  }
  for (const entry of state.queue) {
    if (entry.id === dialogueId) entry.ratings += 1;
  }
  state = markHandled(state, dialogueId);
  await advance();
}

async function skipDialogue(): Promise<void> {
  if (!state.current) return;
  const dialogueId = state.current.dialogue.id;
  try {
    await postSkip(dialogueId, state.raterId);
  } catch {
    // skips are best-effort bookkeeping; move on regardless
  }
  state = markHandled(state, dialogueId);
  await advance();
}

async function advance(): Promise<void> {
  goldErrors.clear();
  const position = nextPosition(state);
  if (position < 0) {
    state = { ...state, position: state.queue.length, current: null };
    render();
    return;
  }
  const entry = state.queue[position]!;
  const detail = await getDialogue(entry.id);
  state = beginReview(state, position, detail);
  render();
}

export async function boot(): Promise<void> {
  const split = new URLSearchParams(window.location.search).get("split") ?? "test";
  ontology = await getOntology();
  const page = await listDialogues(split, 1, 500);
  state = newSession(raterId(), page.items);
  await advance();
}

if (typeof document !== "undefined" && document.querySelector("#app[data-autoboot]")) {
  void boot();
}
