// Client-side mirror of the annotation DSL's canonical form and the slot
// resolution rules, so the editor can preview and validate before submitting.
// The server remains the source of truth; these checks only mirror it.

import type { GoldItemWire, Ontology } from "./types.js";

const NAME_RE = /^[A-Za-z_][A-Za-z0-9_.\-]*$/;

export const ACT_TYPES = ["inform", "request", "act", "confirm", "offer"] as const;

export interface GoldItemDraft {
  actType: string;
  slot: string;
  value: string; // empty string means "no value" (request-style item)
}

export function emptyItem(): GoldItemDraft {
  return { actType: "inform", slot: "", value: "" };
}

/** Canonical text form: space-separated type(slot=value) / type(slot). */
export function serializeItems(items: GoldItemDraft[]): string {
  return items
    .map((item) => {
      const value = item.value.trim();
      return value ? `${item.actType}(${item.slot}=${value})` : `${item.actType}(${item.slot})`;
    })
    .join(" ");
}

/** Slot picker options: bare names when unambiguous, domain.slot always. */
export function slotOptions(ont: Ontology): string[] {
  const counts = new Map<string, number>();
  for (const slots of Object.values(ont.domains)) {
    for (const slot of slots) counts.set(slot, (counts.get(slot) ?? 0) + 1);
  }
  const options: string[] = [];
  for (const [domain, slots] of Object.entries(ont.domains)) {
    for (const slot of slots) {
      if (counts.get(slot) === 1 && !options.includes(slot)) options.push(slot);
      options.push(`${domain}.${slot}`);
    }
  }
  return options;
}

/** Mirrors the server's resolve(): qualified must exist, bare must be unique. */
export function slotError(slot: string, ont: Ontology): string | null {
  if (!slot) return "SLOT_REQUIRED";
  if (!NAME_RE.test(slot)) return "BAD_SLOT_NAME";
  const dot = slot.indexOf(".");
  if (dot > 0 && dot < slot.length - 1) {
    const domain = slot.slice(0, dot);
    const bare = slot.slice(dot + 1);
    const slots = ont.domains[domain];
    if (!slots) return "UNKNOWN_SLOT";
    return slots.includes(bare) ? null : "UNKNOWN_SLOT";
  }
  const owners = Object.entries(ont.domains).filter(([, slots]) => slots.includes(slot));
  if (owners.length === 0) return "UNKNOWN_SLOT";
  if (owners.length > 1) return "AMBIGUOUS_SLOT";
  return null;
}

export function itemProblems(item: GoldItemDraft, ont: Ontology): string[] {
  const problems: string[] = [];
  if (!NAME_RE.test(item.actType)) problems.push("BAD_ACT_TYPE");
  const slotProblem = slotError(item.slot, ont);
  if (slotProblem) problems.push(slotProblem);
  const value = item.value.trim();
  if (value.includes(")")) problems.push("VALUE_HAS_CLOSE_PAREN");
  return problems;
}

export function itemsValid(items: GoldItemDraft[], ont: Ontology): boolean {
  return items.every((item) => itemProblems(item, ont).length === 0);
}

export function toWire(items: GoldItemDraft[]): GoldItemWire[] {
  return items.map((item) => ({
    act_type: item.actType,
    slot: item.slot,
    value: item.value.trim() || null,
  }));
}

export function fromWire(items: GoldItemWire[]): GoldItemDraft[] {
  return items.map((item) => ({
    actType: item.act_type,
    slot: item.slot,
    value: item.value ?? "",
  }));
}
