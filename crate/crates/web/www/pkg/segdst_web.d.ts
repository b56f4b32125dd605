/* tslint:disable */
/* eslint-disable */

/**
 * Parses a model completion for `transcript` and returns the prediction
 * record as JSON: per-turn annotations, reconstructed segments, recovery
 * notes and failures.
 */
export function analyze_output(variant_name: string, transcript: string, output: string, strict: boolean): string;

/**
 * The exact prompt the variant sends for `transcript`.
 */
export function render_prompt(variant_name: string, transcript: string): string;

export function segmentation_metrics(units: number, reference: string, hypothesis: string, k: number): string;

/**
 * Names of every prompt variant, as a JSON array.
 */
export function variants(): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly analyze_output: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly render_prompt: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly segmentation_metrics: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly variants: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
