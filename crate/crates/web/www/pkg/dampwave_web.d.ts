/* tslint:disable */
/* eslint-disable */

/**
 * A run of `ε u_tt + u_t − u_xx = 2u − u³` on `(0, π)` from `(a φ_k, 0)`.
 */
export class WaveRun {
    free(): void;
    [Symbol.dispose](): void;
    lyapunov(): Float64Array;
    constructor(eps: number, mode: number, amplitude: number, t_end: number, h: number);
    /**
     * `u(T)` on the grid, boundary values included.
     */
    profile(): Float64Array;
    times(): Float64Array;
    u_h1(): Float64Array;
    v_l2(): Float64Array;
    x(): Float64Array;
}

/**
 * `"complex"`, `"real"` or `"double"` for the roots of `ε σ² + σ + μ = 0`.
 */
export function mode_regime(eps: number, mu: number): string;

/**
 * `u(t)` of `ε u'' + u' + μ u = 0`, `u(0) = 1`, `u'(0) = 0`, at `samples` points of `[0, t_end]`.
 */
export function mode_response(eps: number, mu: number, t_end: number, samples: number): Float64Array;

/**
 * Eigenvalues of `−d²/dx²` on `(0, length)` and their relative errors against `(kπ/length)²`,
 * interleaved as `[λ₁, err₁, λ₂, err₂, …]`.
 */
export function spectrum(length: number, grid_n: number, modes: number, fourth_order: boolean): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_waverun_free: (a: number, b: number) => void;
    readonly mode_regime: (a: number, b: number) => [number, number];
    readonly mode_response: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly spectrum: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly waverun_lyapunov: (a: number) => [number, number];
    readonly waverun_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly waverun_profile: (a: number) => [number, number];
    readonly waverun_times: (a: number) => [number, number];
    readonly waverun_u_h1: (a: number) => [number, number];
    readonly waverun_v_l2: (a: number) => [number, number];
    readonly waverun_x: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
