/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_waverun_free: (a: number, b: number) => void;
export const mode_regime: (a: number, b: number) => [number, number];
export const mode_response: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const spectrum: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const waverun_lyapunov: (a: number) => [number, number];
export const waverun_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const waverun_profile: (a: number) => [number, number];
export const waverun_times: (a: number) => [number, number];
export const waverun_u_h1: (a: number) => [number, number];
export const waverun_v_l2: (a: number) => [number, number];
export const waverun_x: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
