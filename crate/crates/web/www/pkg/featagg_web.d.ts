/* tslint:disable */
/* eslint-disable */

export class DemoRun {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Codebook after each epoch, epoch 0 first: `epochs + 1` blocks of `K * 2`.
     */
    codebooks(): Float64Array;
    /**
     * Test accuracy after classifier fine-tuning.
     */
    final_test_accuracy(): number;
    k(): number;
    /**
     * Dominant codeword and its responsibility at each cell of a
     * `resolution x resolution` grid over `[x0, x1] x [y0, y1]`, row-major
     * from the top: `[k, weight]` pairs.
     */
    responsibility_field(x0: number, x1: number, y0: number, y1: number, resolution: number): Float64Array;
    test_accuracy(): Float64Array;
    train_accuracy(): Float64Array;
}

export function chi2Curve(y: number, order: number, period: number, samples: number): Float64Array;

export function datasetPoints(name: string, noise: number, seed: number): Float64Array;

export function trainDemo(name: string, k: number, gamma: number, init: string, epochs: number, noise: number, seed: number): DemoRun;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demorun_free: (a: number, b: number) => void;
    readonly chi2Curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly datasetPoints: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demorun_codebooks: (a: number) => [number, number];
    readonly demorun_final_test_accuracy: (a: number) => number;
    readonly demorun_k: (a: number) => number;
    readonly demorun_responsibility_field: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly demorun_test_accuracy: (a: number) => [number, number];
    readonly demorun_train_accuracy: (a: number) => [number, number];
    readonly trainDemo: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
