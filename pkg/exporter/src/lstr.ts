/**
 * Binary trace container "LSTR" (little-endian).
 *
 * Layout:
 *   bytes 0-3   ASCII magic "LSTR"
 *   byte  4     version 0x01
 *   bytes 5-8   u32 record count n
 *   bytes 9-12  u32 latent_dim d
 *   bytes 13-16 u32 class_count
 *   byte  17    split tag (0=train, 1=validation, 2=test, 3=corner_case)
 *   bytes 18-20 reserved, zero
 *   n records:  u32 input_id, u32 ground_truth, u32 predicted, d x f32 latent
 */

export const MAGIC = "LSTR";
export const VERSION = 1;
export const HEADER_SIZE = 21;

export const SPLIT_TAGS = ["train", "validation", "test", "corner_case"] as const;
export type SplitTag = (typeof SPLIT_TAGS)[number];

export interface TraceRecord {
  inputId: number;
  groundTruth: number;
  predicted: number;
  latent: Float32Array;
}

export interface TraceSet {
  splitTag: SplitTag;
  classCount: number;
  latentDim: number;
  records: TraceRecord[];
}

export function encodeTraceSet(ts: TraceSet): Uint8Array {
  const splitCode = SPLIT_TAGS.indexOf(ts.splitTag);
  if (splitCode < 0) {
    throw new Error(`unknown split tag ${JSON.stringify(ts.splitTag)}`);
  }
  if (ts.records.length === 0) {
    throw new Error("refusing to encode an empty trace set");
  }
  if (ts.latentDim <= 0 || ts.classCount <= 0) {
    throw new Error("latentDim and classCount must be positive");
  }
  const recordSize = 12 + 4 * ts.latentDim;
  const buf = new ArrayBuffer(HEADER_SIZE + ts.records.length * recordSize);
  const view = new DataView(buf);
  const bytes = new Uint8Array(buf);

  for (let i = 0; i < 4; i++) bytes[i] = MAGIC.charCodeAt(i);
  view.setUint8(4, VERSION);
  view.setUint32(5, ts.records.length, true);
  view.setUint32(9, ts.latentDim, true);
  view.setUint32(13, ts.classCount, true);
  view.setUint8(17, splitCode);
  // bytes 18-20 stay zero (reserved)

  let off = HEADER_SIZE;
  for (const r of ts.records) {
    if (r.latent.length !== ts.latentDim) {
      throw new Error(
        `record ${r.inputId}: latent dim ${r.latent.length} != ${ts.latentDim}`,
      );
    }
    if (r.groundTruth < 0 || r.groundTruth >= ts.classCount) {
      throw new Error(`record ${r.inputId}: ground truth out of range`);
    }
    if (r.predicted < 0 || r.predicted >= ts.classCount) {
      throw new Error(`record ${r.inputId}: predicted label out of range`);
    }
    view.setUint32(off, r.inputId, true);
    view.setUint32(off + 4, r.groundTruth, true);
    view.setUint32(off + 8, r.predicted, true);
    for (let j = 0; j < ts.latentDim; j++) {
      view.setFloat32(off + 12 + 4 * j, r.latent[j], true);
    }
    off += recordSize;
  }
  return bytes;
}

export function decodeTraceSet(data: Uint8Array): TraceSet {
  if (data.length < HEADER_SIZE) {
    throw new Error(`header needs ${HEADER_SIZE} bytes, stream has ${data.length}`);
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const magic = String.fromCharCode(data[0], data[1], data[2], data[3]);
  if (magic !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}`);
  }
  if (data[4] !== VERSION) {
    throw new Error(`unsupported version ${data[4]}`);
  }
  const n = view.getUint32(5, true);
  const d = view.getUint32(9, true);
  const classCount = view.getUint32(13, true);
  const splitCode = data[17];
  if (splitCode >= SPLIT_TAGS.length) {
    throw new Error(`unknown split code ${splitCode}`);
  }
  if (n === 0) throw new Error("empty trace set");
  if (d === 0) throw new Error("latent_dim is zero");
  const recordSize = 12 + 4 * d;
  const expected = HEADER_SIZE + n * recordSize;
  if (data.length < expected) {
    throw new Error(
      `expected ${expected} bytes for ${n} records, stream has ${data.length}`,
    );
  }
  const records: TraceRecord[] = [];
  let off = HEADER_SIZE;
  for (let i = 0; i < n; i++) {
    const latent = new Float32Array(d);
    for (let j = 0; j < d; j++) {
      latent[j] = view.getFloat32(off + 12 + 4 * j, true);
    }
    records.push({
      inputId: view.getUint32(off, true),
      groundTruth: view.getUint32(off + 4, true),
      predicted: view.getUint32(off + 8, true),
      latent,
    });
    off += recordSize;
  }
  return { splitTag: SPLIT_TAGS[splitCode], classCount, latentDim: d, records };
}
