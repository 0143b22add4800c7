/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demorun_free: (a: number, b: number) => void;
export const chi2Curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const datasetPoints: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demorun_codebooks: (a: number) => [number, number];
export const demorun_final_test_accuracy: (a: number) => number;
export const demorun_k: (a: number) => number;
export const demorun_responsibility_field: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const demorun_test_accuracy: (a: number) => [number, number];
export const demorun_train_accuracy: (a: number) => [number, number];
export const trainDemo: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
