/** Snapshot wire schema: versioned JSON text messages from the bridge. */

export const SCHEMA_VERSION = 1;

export type Vec3 = [number, number, number];

export interface LinkView {
  id: number;
  a: Vec3;
  b: Vec3;
  center: Vec3;
  ext: [number, number];
  act: [number, number];
}

export interface SnapshotView {
  sim_time: number;
  links: LinkView[];
  attachments: [number, number][];
  morphology: { names: string[]; hash: string };
}

export class SchemaMismatch extends Error {}

export function parseSnapshot(text: string): SnapshotView {
  const data = JSON.parse(text);
  if (data.v !== SCHEMA_VERSION) {
    throw new SchemaMismatch(`schema version ${data.v}, expected ${SCHEMA_VERSION}`);
  }
  if (data.type !== "snapshot") {
    throw new Error(`not a snapshot: ${data.type}`);
  }
  return data as SnapshotView;
}

export function keysMessage(keys: string[]): string {
  return JSON.stringify({ v: SCHEMA_VERSION, type: "keys", keys });
}

/** Ground-contact magnet indices, for observing topple face changes. */
export function groundedMagnets(snapshot: SnapshotView, tolerance = 0.02): number[] {
  const out: number[] = [];
  snapshot.links.forEach((link, index) => {
    if (link.a[2] <= tolerance) out.push(2 * index);
    if (link.b[2] <= tolerance) out.push(2 * index + 1);
  });
  return out;
}
