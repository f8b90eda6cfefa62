/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const cpmg_curves: (a: number, b: number) => [number, number, number, number];
export const odnmr_spectrum: (a: number, b: number) => [number, number, number, number];
export const rabi_trace: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
