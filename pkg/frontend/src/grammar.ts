/**
 * Operator key-chord grammar, mirrored exactly from the server parser.
 * The shared fixture corpus in ../tests/data/teleop_fixtures.json keeps the
 * two implementations aligned.
 */

export interface TeleopCommand {
  selection: number[];
  servo_select: "A" | "B" | "both";
  action: string;
  preset: string | null;
  variant: number;
  direction: number | null;
}

const ALIASES: Record<string, string> = {
  arrowup: "up",
  arrowdown: "down",
  arrowleft: "left",
  arrowright: "right",
  "↑": "up",
  "↓": "down",
  "←": "left",
  "→": "right",
  "-": "minus",
  _: "minus",
  "+": "plus",
  "=": "plus",
  "/": "slash",
  "*": "star",
  numlock: "numlock",
};

const PRESETS: Record<string, [string, number]> = {
  c: ["triangle crawl", 0],
  v: ["tetrahedron crawl", 0],
  b: ["diamond crawl", 0],
  d: ["ratchet crawl", 0],
  f: ["ratchet crawl", 1],
  g: ["ratchet crawl", 2],
  t: ["topple", 0],
  y: ["topple", 1],
  u: ["topple", 2],
  o: ["rotate ccw", 0],
  p: ["rotate cw", 0],
};

export function normalizeKey(key: string): string {
  const k = key.toLowerCase();
  return ALIASES[k] ?? k;
}

export function parseTeleop(keys: Iterable<string>, crawlMode = false): TeleopCommand {
  const chord = new Set<string>();
  for (const key of keys) chord.add(normalizeKey(key));

  const selection = new Set<number>();
  for (const key of chord) {
    if (key.length === 1 && key >= "0" && key <= "9") {
      const ordinal = Number(key);
      selection.add(ordinal === 0 ? 1 : ordinal);
    }
  }

  const left = chord.has("left");
  const right = chord.has("right");
  let servo: "A" | "B" | "both" = "both";
  if (left && !right) servo = "A";
  else if (right && !left) servo = "B";

  const base = {
    selection: [...selection].sort((a, b) => a - b),
    servo_select: servo,
    preset: null as string | null,
    variant: 0,
    direction: null as number | null,
  };

  if (chord.has("s")) return { ...base, action: "stop" };
  if (chord.has("numlock")) return { ...base, action: "crawl_mode_toggle" };
  if (crawlMode) {
    if (chord.has("slash")) return { ...base, action: "crawl_direction", direction: 0 };
    if (chord.has("star")) return { ...base, action: "crawl_direction", direction: 1 };
    if (selection.size) return { ...base, action: "crawl_toggle" };
    return { ...base, action: "none" };
  }
  for (const [key, [preset, variant]] of Object.entries(PRESETS)) {
    if (chord.has(key)) return { ...base, action: "preset", preset, variant };
  }
  if (chord.has("r")) return { ...base, action: "ratchet_reset" };
  if (chord.has("minus")) return { ...base, action: "full_contract_all" };
  if (chord.has("plus")) return { ...base, action: "full_expand_all" };
  if (chord.has("up")) return { ...base, action: "expand" };
  if (chord.has("down")) return { ...base, action: "contract" };
  return { ...base, action: "none" };
}
