/* tslint:disable */
/* eslint-disable */

/**
 * Closed-form CPMG visibility for N = 1, 2, 4, 8 with the bath calibrated to
 * a Hahn-echo time `t2_ms` at correlation time `tau_c_ms`, and the fitted
 * T2(N) scaling exponent.
 */
export function cpmg_curves(t2_ms: number, tau_c_ms: number): string;

/**
 * ODNMR spectrum of the 21.475 MHz line at `power_w` for a spin
 * inhomogeneous width `fwhm_khz`, with its Lorentzian fit.
 */
export function odnmr_spectrum(power_w: number, fwhm_khz: number): string;

/**
 * Simulated Rabi nutation at `power_w` with its damped-cosine fit.
 */
export function rabi_trace(power_w: number, k_rabi: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly cpmg_curves: (a: number, b: number) => [number, number, number, number];
    readonly odnmr_spectrum: (a: number, b: number) => [number, number, number, number];
    readonly rabi_trace: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
