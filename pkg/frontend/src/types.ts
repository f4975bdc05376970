// Shared shapes mirroring the review service API.

export interface Ontology {
  domains: Record<string, string[]>;
  act_slots: string[];
}

export interface TurnData {
  speaker: "user" | "bot";
  text: string;
  annotation: string;
  items: GoldItemWire[];
}

export interface DialogueData {
  id: string;
  email_id: string;
  variant_id: string;
  turns: TurnData[];
}

export interface EmailData {
  id: string;
  body: string;
  subject: string | null;
}

export interface DialogueDetail {
  split: string;
  dialogue: DialogueData;
  email: EmailData | null;
  ratings: number;
  target_ratings: number;
  gold: GoldRecord | null;
}

export interface DialogueSummary {
  id: string;
  email_id: string;
  split: string;
  n_turns: number;
  ratings: number;
  target_ratings: number;
  skips: number;
  gold_version: number;
}

export interface DialoguePage {
  items: DialogueSummary[];
  page: number;
  pages: number;
  total: number;
  page_size: number;
}

export interface GoldItemWire {
  act_type: string;
  slot: string;
  value: string | null;
}

export interface GoldRecord {
  dialogue_id: string;
  version: number;
  turns: Record<string, GoldItemWire[]>;
  editor_id: string | null;
}

export interface RatingPayload {
  rater_id: string;
  c0: boolean;
  c1: number;
  c2: boolean;
  c2_1?: number;
  c2_2?: number;
  c3: number;
  c4: number;
  c5: number;
}

export interface AggregatedRating {
  dialogue_id: string;
  n_raters: number;
  c0_valid: boolean;
  c2_rate: number;
  c1_mean: number;
  c3_mean: number;
  c4_mean: number;
  c5_mean: number;
  c2_1_mean: number | null;
  c2_2_mean: number | null;
}
