// DOM renderers. These are deliberately plain createElement helpers so the
// gating behaviour can be exercised under a DOM test environment without a
// framework or bundler.

import { draftProblems, isSubmittable, setC2, type RatingDraft } from "./rating.js";
import {
  ACT_TYPES,
  emptyItem,
  itemProblems,
  itemsValid,
  serializeItems,
  slotOptions,
  type GoldItemDraft,
} from "./dsl.js";
import type { DialogueDetail, Ontology } from "./types.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className = "", text = ""): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

const CREATION_RULES = [
  "The dialogue is written as alternating User and Bot lines.",
  "All information from the e-mail must reappear in the dialogue.",
  "The user reveals information gradually rather than all at once.",
  "The bot asks for missing booking details and stays consistent with invented ones.",
  "The bot closes by summarising the next step.",
];

export function renderEmailPanel(container: HTMLElement, detail: DialogueDetail): void {
  container.textContent = "";
  container.appendChild(el("h2", "panel-title", "Source e-mail"));
  if (detail.email) {
    if (detail.email.subject) {
      container.appendChild(el("div", "email-subject", detail.email.subject));
    }
    const body = el("pre", "email-body");
    body.textContent = detail.email.body;
    container.appendChild(body);
  } else {
    container.appendChild(el("p", "email-missing", "(source e-mail not available)"));
  }
  const instructions = el("details", "instructions");
  instructions.appendChild(el("summary", "", "How the dialogue should be created"));
  const list = el("ul");
  for (const rule of CREATION_RULES) list.appendChild(el("li", "", rule));
  instructions.appendChild(list);
  container.appendChild(instructions);
}

// --- rating form -------------------------------------------------------------

export interface RatingFormHandlers {
  onChange(draft: RatingDraft): void;
  onSubmit(): void;
  onSkip(): void;
}

const QUESTIONS = {
  c0: "C-0: The original e-mail is a genuine request for a vacation offer.",
  c1: "C-1: How much of the information from the e-mail appears in the dialogue?",
  c2: "C-2: The user utterances contain more information than the e-mail.",
  c2_1: "C-2-1: How much sense does the additional information make in this dialogue?",
  c2_2: "C-2-2: How relevant is the additional information to booking a vacation?",
  c3: "C-3: How closely does the dialogue follow the creation instructions?",
  c4: "C-4: How closely does the dialogue resemble a real conversation?",
  c5: "C-5: How helpful is the Bot to the User?",
} as const;

function likertRow(id: string, label: string, value: number | null,
                   onPick: (v: number) => void): HTMLElement {
  const row = el("div", "criterion likert");
  row.id = `row-${id}`;
  row.appendChild(el("label", "question", label));
  const group = el("div", "likert-group");
  for (let v = 1; v <= 5; v++) {
    const option = el("label", "likert-option");
    const input = el("input");
    input.type = "radio";
    input.name = id;
    input.value = String(v);
    input.checked = value === v;
    input.addEventListener("change", () => onPick(v));
    option.appendChild(input);
    option.appendChild(document.createTextNode(String(v)));
    group.appendChild(option);
  }
  row.appendChild(group);
  return row;
}

function yesNoRow(id: string, label: string, value: boolean | null,
                  onPick: (v: boolean) => void): HTMLElement {
  const row = el("div", "criterion yesno");
  row.id = `row-${id}`;
  row.appendChild(el("label", "question", label));
  const group = el("div", "yesno-group");
  for (const [text, v] of [["Yes", true], ["No", false]] as const) {
    const option = el("label", "yesno-option");
    const input = el("input");
    input.type = "radio";
    input.name = id;
    input.checked = value === v;
    input.addEventListener("change", () => onPick(v));
    option.appendChild(input);
    option.appendChild(document.createTextNode(text));
    group.appendChild(option);
  }
  row.appendChild(group);
  return row;
}

export function renderRatingForm(container: HTMLElement, draft: RatingDraft,
                                 handlers: RatingFormHandlers): void {
  container.textContent = "";
  container.appendChild(el("h2", "panel-title", "Rating"));
  container.appendChild(yesNoRow("c0", QUESTIONS.c0, draft.c0,
    (v) => handlers.onChange({ ...draft, c0: v })));
  container.appendChild(likertRow("c1", QUESTIONS.c1, draft.c1,
    (v) => handlers.onChange({ ...draft, c1: v })));
  container.appendChild(yesNoRow("c2", QUESTIONS.c2, draft.c2,
    (v) => handlers.onChange(setC2(draft, v))));

  // C-2-1 / C-2-2 exist exactly when C-2 is answered yes
  const conditional = el("div", "conditional");
  conditional.id = "c2-conditional";
  conditional.hidden = draft.c2 !== true;
  conditional.appendChild(likertRow("c2_1", QUESTIONS.c2_1, draft.c2_1,
    (v) => handlers.onChange({ ...draft, c2_1: v })));
  conditional.appendChild(likertRow("c2_2", QUESTIONS.c2_2, draft.c2_2,
    (v) => handlers.onChange({ ...draft, c2_2: v })));
  container.appendChild(conditional);

  container.appendChild(likertRow("c3", QUESTIONS.c3, draft.c3,
    (v) => handlers.onChange({ ...draft, c3: v })));
  container.appendChild(likertRow("c4", QUESTIONS.c4, draft.c4,
    (v) => handlers.onChange({ ...draft, c4: v })));
  container.appendChild(likertRow("c5", QUESTIONS.c5, draft.c5,
    (v) => handlers.onChange({ ...draft, c5: v })));

  const problems = draftProblems(draft);
  const hint = el("div", "problems");
  hint.id = "rating-problems";
  hint.textContent = problems.join(" · ");
  container.appendChild(hint);

  const actions = el("div", "actions");
  const submit = el("button", "submit", "Submit rating");
  submit.id = "submit-rating";
  submit.disabled = !isSubmittable(draft);
  submit.addEventListener("click", handlers.onSubmit);
  actions.appendChild(submit);
  const skip = el("button", "skip", "Skip dialogue");
  skip.id = "skip-dialogue";
  skip.addEventListener("click", handlers.onSkip);
  actions.appendChild(skip);
  container.appendChild(actions);
}

// --- dialogue + gold editor ------------------------------------------------------

export interface GoldHandlers {
  onEdit(turn: number, items: GoldItemDraft[]): void;
  onSave(turn: number): void;
}

export interface GoldView {
  draftFor(turn: number): GoldItemDraft[];
  unsaved(turn: number): boolean;
  errorFor(turn: number): string | null;
}

export function renderDialoguePanel(container: HTMLElement, detail: DialogueDetail,
                                    ont: Ontology, gold: GoldView,
                                    handlers: GoldHandlers): void {
  container.textContent = "";
  container.appendChild(el("h2", "panel-title",
    `Dialogue ${detail.dialogue.id} (${detail.split} split)`));
  const editable = detail.split === "test";

  const datalist = el("datalist");
  datalist.id = "slot-options";
  for (const option of slotOptions(ont)) {
    const item = el("option");
    item.value = option;
    datalist.appendChild(item);
  }
  container.appendChild(datalist);

  detail.dialogue.turns.forEach((turn, index) => {
    const row = el("div", `turn turn-${turn.speaker}`);
    row.id = `turn-${index}`;
    const badge = el("span", `badge badge-${turn.speaker}`,
      turn.speaker === "user" ? "User" : "Bot");
    row.appendChild(badge);
    row.appendChild(el("span", "turn-text", turn.text));
    if (turn.annotation) {
      row.appendChild(el("div", "model-annotation", `model: // ${turn.annotation}`));
    }
    if (editable) {
      row.appendChild(renderGoldEditor(index, ont, gold, handlers));
    }
    container.appendChild(row);
  });
}

function renderGoldEditor(turn: number, ont: Ontology, gold: GoldView,
                          handlers: GoldHandlers): HTMLElement {
  const items = gold.draftFor(turn);
  const editor = el("div", "gold-editor");
  editor.id = `gold-${turn}`;

  items.forEach((item, itemIndex) => {
    const rowEl = el("div", "gold-item");
    const act = el("select");
    act.className = "gold-act";
    for (const actType of ACT_TYPES) {
      const option = el("option", "", actType);
      option.value = actType;
      option.selected = item.actType === actType;
      act.appendChild(option);
    }
    act.addEventListener("change", () => {
      const next = items.map((x, i) => i === itemIndex ? { ...x, actType: act.value } : x);
      handlers.onEdit(turn, next);
    });
    rowEl.appendChild(act);

    const slot = el("input", "gold-slot");
    slot.value = item.slot;
    slot.placeholder = "slot";
    slot.setAttribute("list", "slot-options");
    slot.addEventListener("input", () => {
      const next = items.map((x, i) => i === itemIndex ? { ...x, slot: slot.value } : x);
      handlers.onEdit(turn, next);
    });
    rowEl.appendChild(slot);

    const value = el("input", "gold-value");
    value.value = item.value;
    value.placeholder = "value (empty for request)";
    value.addEventListener("input", () => {
      const next = items.map((x, i) => i === itemIndex ? { ...x, value: value.value } : x);
      handlers.onEdit(turn, next);
    });
    rowEl.appendChild(value);

    const remove = el("button", "gold-remove", "×");
    remove.addEventListener("click", () =>
      handlers.onEdit(turn, items.filter((_, i) => i !== itemIndex)));
    rowEl.appendChild(remove);

    const problems = itemProblems(item, ont);
    if (problems.length) {
      rowEl.appendChild(el("span", "gold-item-error", problems.join(", ")));
    }
    editor.appendChild(rowEl);
  });

  const add = el("button", "gold-add", "+ item");
  add.addEventListener("click", () => handlers.onEdit(turn, [...items, emptyItem()]));
  editor.appendChild(add);

  const preview = el("div", "gold-preview", `// ${serializeItems(items)}`);
  preview.id = `gold-preview-${turn}`;
  editor.appendChild(preview);

  const serverError = gold.errorFor(turn);
  if (serverError) {
    editor.appendChild(el("div", "gold-server-error", serverError));
  }

  const save = el("button", "gold-save",
    gold.unsaved(turn) ? "Save gold (unsaved)" : "Save gold");
  save.id = `gold-save-${turn}`;
  save.disabled = !itemsValid(items, ont) || !gold.unsaved(turn);
  save.addEventListener("click", () => handlers.onSave(turn));
  editor.appendChild(save);
  if (gold.unsaved(turn)) editor.classList.add("unsaved");
  return editor;
}

export function renderProgress(container: HTMLElement, done: number, total: number,
                               raterId: string): void {
  container.textContent = "";
  container.appendChild(el("span", "progress-count", `${done} / ${total} dialogues handled`));
  const bar = el("div", "progress-bar");
  const fill = el("div", "progress-fill");
  fill.style.width = total ? `${Math.round((100 * done) / total)}%` : "0%";
  bar.appendChild(fill);
  container.appendChild(bar);
  container.appendChild(el("span", "rater", `rater: ${raterId}`));
}
