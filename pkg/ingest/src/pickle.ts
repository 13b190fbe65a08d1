/**
 * Minimal pickle reader for the citation-benchmark distribution files.
 *
 * Supports the opcode subset those files use (protocol 2 streams written by
 * either python 2 or python 3) and reconstructs exactly the object kinds they
 * contain: numpy arrays, scipy CSR matrices, dicts / defaultdicts of int
 * lists, tuples, ints, bools, bytes and strings.  Anything else fails loudly.
 */

export class PickleError extends Error {}

/** Dense row-major float64 matrix decoded from a pickled numpy array. */
export interface Matrix {
  rows: number;
  cols: number;
  data: Float64Array;
}

/** Compressed sparse rows decoded from a pickled scipy csr_matrix. */
export interface CsrMatrix {
  rows: number;
  cols: number;
  data: Float64Array;
  indices: Int32Array;
  indptr: Int32Array;
}

interface DTypeInfo {
  code: string; // e.g. "f4", "i8"
  littleEndian: boolean;
}

class NdArrayStub {
  dtype: DTypeInfo | null = null;
  shape: number[] = [];
  raw: Uint8Array | null = null;
}

class CsrStub {
  shape: [number, number] | null = null;
  data: NdArrayStub | null = null;
  indices: NdArrayStub | null = null;
  indptr: NdArrayStub | null = null;
}

class GlobalRef {
  constructor(public module: string, public name: string) {}
  get key(): string {
    return `${this.module}.${this.name}`;
  }
}

class DefaultDict {
  map = new Map<unknown, unknown>();
}

const MARK = Symbol("mark");

function decodeTyped(stub: NdArrayStub): { shape: number[]; values: Float64Array } {
  if (!stub.dtype || !stub.raw) throw new PickleError("ndarray missing dtype or data");
  const { code, littleEndian } = stub.dtype;
  const raw = stub.raw;
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const itemsize = Number(code.slice(1));
  const count = raw.byteLength / itemsize;
  if (!Number.isInteger(count)) throw new PickleError(`ragged ndarray payload for ${code}`);
  const out = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    const off = i * itemsize;
    switch (code) {
      case "f4":
        out[i] = view.getFloat32(off, littleEndian);
        break;
      case "f8":
        out[i] = view.getFloat64(off, littleEndian);
        break;
      case "i4":
        out[i] = view.getInt32(off, littleEndian);
        break;
      case "i8": {
        const v = view.getBigInt64(off, littleEndian);
        out[i] = Number(v);
        break;
      }
      case "i2":
        out[i] = view.getInt16(off, littleEndian);
        break;
      case "i1":
        out[i] = view.getInt8(off);
        break;
      case "u1":
        out[i] = view.getUint8(off);
        break;
      case "b1":
        out[i] = view.getUint8(off);
        break;
      default:
        throw new PickleError(`unsupported dtype ${code}`);
    }
  }
  return { shape: stub.shape, values: out };
}

export function toMatrix(obj: unknown): Matrix {
  if (!(obj instanceof NdArrayStub)) throw new PickleError("expected a numpy array");
  const { shape, values } = decodeTyped(obj);
  if (shape.length === 1) return { rows: shape[0], cols: 1, data: values };
  if (shape.length === 2) return { rows: shape[0], cols: shape[1], data: values };
  throw new PickleError(`expected a 1-D or 2-D array, got shape ${shape}`);
}

export function toCsr(obj: unknown): CsrMatrix {
  if (!(obj instanceof CsrStub)) throw new PickleError("expected a csr matrix");
  if (!obj.shape || !obj.data || !obj.indices || !obj.indptr)
    throw new PickleError("csr matrix missing state");
  const data = decodeTyped(obj.data).values;
  const indices = Int32Array.from(decodeTyped(obj.indices).values);
  const indptr = Int32Array.from(decodeTyped(obj.indptr).values);
  return { rows: obj.shape[0], cols: obj.shape[1], data, indices, indptr };
}

/** Adjacency dict: node id -> neighbor ids. */
export function toGraphDict(obj: unknown): Map<number, number[]> {
  const source = obj instanceof DefaultDict ? obj.map : obj;
  if (!(source instanceof Map)) throw new PickleError("expected a dict graph");
  const out = new Map<number, number[]>();
  for (const [k, v] of source) {
    if (typeof k !== "number" || !Array.isArray(v))
      throw new PickleError("graph dict must map ints to lists of ints");
    out.set(k, v.map((x) => {
      if (typeof x !== "number") throw new PickleError("non-integer neighbor");
      return x;
    }));
  }
  return out;
}

const SUPPORTED_GLOBALS = new Set([
  "numpy.core.multiarray._reconstruct",
  "numpy._core.multiarray._reconstruct",
  "numpy.ndarray",
  "numpy.dtype",
  "_codecs.encode",
  "collections.defaultdict",
  "builtins.list",
  "__builtin__.list",
  "scipy.sparse.csr.csr_matrix",
  "scipy.sparse._csr.csr_matrix",
  "scipy.sparse.csr_matrix",
]);

export function loads(buf: Uint8Array): unknown {
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  let pos = 0;
  const stack: unknown[] = [];
  const memo = new Map<number, unknown>();

  const u8 = () => view.getUint8(pos++);
  const readBytes = (n: number) => {
    const out = buf.subarray(pos, pos + n);
    pos += n;
    return out;
  };
  const readLine = () => {
    let end = pos;
    while (buf[end] !== 0x0a) end++;
    const str = Buffer.from(buf.subarray(pos, end)).toString("latin1");
    pos = end + 1;
    return str;
  };
  const pop = () => {
    if (!stack.length) throw new PickleError("stack underflow");
    return stack.pop();
  };
  const popMark = () => {
    const idx = stack.lastIndexOf(MARK);
    if (idx < 0) throw new PickleError("no mark on stack");
    const items = stack.splice(idx + 1);
    stack.pop();
    return items;
  };

  const applyReduce = (callable: unknown, args: unknown[]): unknown => {
    if (!(callable instanceof GlobalRef)) throw new PickleError("REDUCE of a non-global");
    switch (callable.key) {
      case "numpy.core.multiarray._reconstruct":
      case "numpy._core.multiarray._reconstruct":
        return new NdArrayStub();
      case "numpy.dtype": {
        const code = args[0];
        if (typeof code !== "string") throw new PickleError("dtype without code");
        return { code, littleEndian: true } satisfies DTypeInfo;
      }
      case "_codecs.encode": {
        const [text, encoding] = args;
        if (typeof text !== "string" || encoding !== "latin1")
          throw new PickleError("unsupported _codecs.encode call");
        return Uint8Array.from(Buffer.from(text, "latin1"));
      }
      case "collections.defaultdict":
        return new DefaultDict();
      case "scipy.sparse.csr.csr_matrix":
      case "scipy.sparse._csr.csr_matrix":
      case "scipy.sparse.csr_matrix":
        return new CsrStub();
      default:
        throw new PickleError(`cannot call ${callable.key}`);
    }
  };

  const applyBuild = (target: unknown, state: unknown): unknown => {
    if (target instanceof NdArrayStub) {
      if (!Array.isArray(state)) throw new PickleError("ndarray BUILD without tuple state");
      // (version, shape, dtype, fortran_order, data)
      const [, shape, dtype, fortran, data] = state as [unknown, unknown, unknown, unknown, unknown];
      if (fortran) throw new PickleError("fortran-ordered arrays unsupported");
      target.shape = (shape as unknown[]).map((v) => {
        if (typeof v !== "number") throw new PickleError("bad shape entry");
        return v;
      });
      const dt = dtype as Partial<DTypeInfo> | null;
      if (!dt || typeof dt.code !== "string") throw new PickleError("ndarray without dtype");
      target.dtype = { code: dt.code, littleEndian: dt.littleEndian ?? true };
      if (!(data instanceof Uint8Array)) throw new PickleError("ndarray data not bytes");
      target.raw = data;
      return target;
    }
    if (target instanceof CsrStub) {
      if (!(state instanceof Map)) throw new PickleError("csr BUILD without dict state");
      const get = (...names: string[]) => {
        for (const name of names) if (state.has(name)) return state.get(name);
        return undefined;
      };
      const shape = get("_shape", "shape") as number[] | undefined;
      if (!shape || shape.length !== 2) throw new PickleError("csr matrix without shape");
      target.shape = [shape[0], shape[1]];
      target.data = get("data") as NdArrayStub;
      target.indices = get("indices") as NdArrayStub;
      target.indptr = get("indptr") as NdArrayStub;
      return target;
    }
    if (target instanceof DefaultDict && state instanceof Map) {
      target.map = state;
      return target;
    }
    // dtype BUILD state carries byte order in slot 1
    if (target && typeof target === "object" && "code" in (target as DTypeInfo)) {
      if (Array.isArray(state) && typeof state[1] === "string") {
        (target as DTypeInfo).littleEndian = state[1] !== ">";
      }
      return target;
    }
    throw new PickleError("BUILD on unsupported object");
  };

  for (;;) {
    const op = u8();
    switch (op) {
      case 0x80: // PROTO
        u8();
        break;
      case 0x95: // FRAME (protocol 4)
        pos += 8;
        break;
      case 0x28: // MARK '('
        stack.push(MARK);
        break;
      case 0x2e: // STOP '.'
        return pop();
      case 0x30: // POP '0'
        pop();
        break;
      case 0x4e: // NONE 'N'
        stack.push(null);
        break;
      case 0x88: // NEWTRUE
        stack.push(true);
        break;
      case 0x89: // NEWFALSE
        stack.push(false);
        break;
      case 0x4a: // BININT 'J'
        stack.push(view.getInt32(pos, true));
        pos += 4;
        break;
      case 0x4b: // BININT1 'K'
        stack.push(u8());
        break;
      case 0x4d: // BININT2 'M'
        stack.push(view.getUint16(pos, true));
        pos += 2;
        break;
      case 0x8a: {
        // LONG1
        const n = u8();
        let value = 0n;
        for (let i = n - 1; i >= 0; i--) value = (value << 8n) | BigInt(buf[pos + i]);
        if (n > 0 && buf[pos + n - 1] & 0x80) value -= 1n << BigInt(8 * n);
        pos += n;
        stack.push(Number(value));
        break;
      }
      case 0x47: // BINFLOAT 'G' (big endian)
        stack.push(view.getFloat64(pos, false));
        pos += 8;
        break;
      case 0x55: {
        // SHORT_BINSTRING (py2 bytes-ish strings)
        const n = u8();
        stack.push(readBytes(n));
        break;
      }
      case 0x54: {
        // BINSTRING
        const n = view.getUint32(pos, true);
        pos += 4;
        stack.push(readBytes(n));
        break;
      }
      case 0x58: {
        // BINUNICODE
        const n = view.getUint32(pos, true);
        pos += 4;
        stack.push(Buffer.from(readBytes(n)).toString("utf-8"));
        break;
      }
      case 0x8c: {
        // SHORT_BINUNICODE
        const n = u8();
        stack.push(Buffer.from(readBytes(n)).toString("utf-8"));
        break;
      }
      case 0x8e: {
        // BINBYTES8
        const n = Number(view.getBigUint64(pos, true));
        pos += 8;
        stack.push(readBytes(n));
        break;
      }
      case 0x42: {
        // BINBYTES
        const n = view.getUint32(pos, true);
        pos += 4;
        stack.push(readBytes(n));
        break;
      }
      case 0x43: {
        // SHORT_BINBYTES
        const n = u8();
        stack.push(readBytes(n));
        break;
      }
      case 0x63: {
        // GLOBAL (newline-terminated module, then name)
        const module = readLine();
        const name = readLine();
        const ref = new GlobalRef(module, name);
        if (ref.key === "numpy.ndarray" || ref.key === "builtins.list" || ref.key === "__builtin__.list") {
          stack.push(ref);
        } else if (!SUPPORTED_GLOBALS.has(ref.key)) {
          throw new PickleError(`unsupported global ${ref.key}`);
        } else {
          stack.push(ref);
        }
        break;
      }
      case 0x93: {
        // STACK_GLOBAL
        const name = pop();
        const module = pop();
        if (typeof module !== "string" || typeof name !== "string")
          throw new PickleError("STACK_GLOBAL expects two strings");
        const ref = new GlobalRef(module, name);
        if (!SUPPORTED_GLOBALS.has(ref.key)) throw new PickleError(`unsupported global ${ref.key}`);
        stack.push(ref);
        break;
      }
      case 0x52: {
        // REDUCE
        const args = pop();
        const callable = pop();
        if (!Array.isArray(args)) throw new PickleError("REDUCE args not a tuple");
        stack.push(applyReduce(callable, args));
        break;
      }
      case 0x81: {
        // NEWOBJ: cls.__new__(cls, *args)
        pop(); // args (always empty for these files)
        const cls = pop();
        stack.push(applyReduce(cls, []));
        break;
      }
      case 0x62: {
        // BUILD
        const state = pop();
        const target = pop();
        stack.push(applyBuild(target, state));
        break;
      }
      case 0x29: // EMPTY_TUPLE ')'
        stack.push([]);
        break;
      case 0x85: // TUPLE1
        stack.push([pop()]);
        break;
      case 0x86: {
        // TUPLE2
        const b = pop();
        const a = pop();
        stack.push([a, b]);
        break;
      }
      case 0x87: {
        // TUPLE3
        const c = pop();
        const b = pop();
        const a = pop();
        stack.push([a, b, c]);
        break;
      }
      case 0x74: // TUPLE 't'
        stack.push(popMark());
        break;
      case 0x5d: // EMPTY_LIST ']'
        stack.push([]);
        break;
      case 0x61: {
        // APPEND 'a'
        const item = pop();
        (stack[stack.length - 1] as unknown[]).push(item);
        break;
      }
      case 0x65: {
        // APPENDS 'e'
        const items = popMark();
        (stack[stack.length - 1] as unknown[]).push(...items);
        break;
      }
      case 0x7d: // EMPTY_DICT '}'
        stack.push(new Map());
        break;
      case 0x73: {
        // SETITEM 's'
        const value = pop();
        const key = pop();
        const target = stack[stack.length - 1];
        (target instanceof DefaultDict ? target.map : (target as Map<unknown, unknown>)).set(key, value);
        break;
      }
      case 0x75: {
        // SETITEMS 'u'
        const items = popMark();
        const target = stack[stack.length - 1];
        const map = target instanceof DefaultDict ? target.map : (target as Map<unknown, unknown>);
        for (let i = 0; i < items.length; i += 2) map.set(items[i], items[i + 1]);
        break;
      }
      case 0x71: // BINPUT 'q'
        memo.set(u8(), stack[stack.length - 1]);
        break;
      case 0x72: {
        // LONG_BINPUT 'r'
        memo.set(view.getUint32(pos, true), stack[stack.length - 1]);
        pos += 4;
        break;
      }
      case 0x94: // MEMOIZE (protocol 4)
        memo.set(memo.size, stack[stack.length - 1]);
        break;
      case 0x68: {
        // BINGET 'h'
        const key = u8();
        if (!memo.has(key)) throw new PickleError(`memo miss ${key}`);
        stack.push(memo.get(key));
        break;
      }
      case 0x6a: {
        // LONG_BINGET 'j'
        const key = view.getUint32(pos, true);
        pos += 4;
        if (!memo.has(key)) throw new PickleError(`memo miss ${key}`);
        stack.push(memo.get(key));
        break;
      }
      default:
        throw new PickleError(`unsupported opcode 0x${op.toString(16)} at ${pos - 1}`);
    }
  }
}
