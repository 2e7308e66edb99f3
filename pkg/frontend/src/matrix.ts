/** Editable pairwise judgment matrix. Reciprocity is a construction
 * invariant: writing a_ij always writes a_ji = 1/a_ij in the same step,
 * so no rendered or submitted state can violate it. */

export const SAATY_MIN = 1 / 9;
export const SAATY_MAX = 9;

/** Discrete slider stops: 1/9 .. 1 .. 9. */
export const SAATY_STOPS: number[] = [
  ...Array.from({ length: 8 }, (_, i) => 1 / (9 - i)),
  ...Array.from({ length: 9 }, (_, i) => i + 1),
];

export class ReciprocalMatrix {
  private readonly cells: number[][];

  constructor(readonly names: string[]) {
    const n = names.length;
    this.cells = Array.from({ length: n }, () => Array<number>(n).fill(1));
  }

  get size(): number {
    return this.names.length;
  }

  get(i: number, j: number): number {
    return this.cells[i][j];
  }

  /** Set a_ij (and a_ji = 1/a_ij). The diagonal is immutable; values are
   * clamped to the Saaty range. Returns the clamped value. */
  set(i: number, j: number, value: number): number {
    if (i === j) {
      return 1;
    }
    if (!Number.isFinite(value) || value <= 0) {
      throw new RangeError(`judgment must be a positive number, got ${value}`);
    }
    const clamped = Math.min(Math.max(value, SAATY_MIN), SAATY_MAX);
    this.cells[i][j] = clamped;
    this.cells[j][i] = 1 / clamped;
    return clamped;
  }

  isReciprocal(eps = 1e-9): boolean {
    for (let i = 0; i < this.size; i++) {
      if (this.cells[i][i] !== 1) return false;
      for (let j = 0; j < this.size; j++) {
        if (Math.abs(this.cells[i][j] * this.cells[j][i] - 1) > eps) return false;
      }
    }
    return true;
  }

  toRows(): number[][] {
    return this.cells.map((row) => [...row]);
  }

  static fromRows(names: string[], rows: number[][]): ReciprocalMatrix {
    const m = new ReciprocalMatrix(names);
    for (let i = 0; i < names.length; i++) {
      for (let j = i + 1; j < names.length; j++) {
        m.set(i, j, rows[i][j]);
      }
    }
    return m;
  }
}
