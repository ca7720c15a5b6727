/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const entropy_vs_separation: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const gmm_collapse: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const pushforward_purity: (a: number, b: number, c: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
