/* tslint:disable */
/* eslint-disable */

/**
 * A 2×3 grid target (6 variables) and a two-register model.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Target probabilities followed by model probabilities, 64 each, with
     * variable 0 as the most significant bit.
     */
    distributions(): Float64Array;
    epochs(): number;
    /**
     * Model and data expectation of `Z` on the given variables.
     */
    expectation(variables: Uint32Array): Float64Array;
    /**
     * `ell_max` is the longest Z-string in the loss (1 to 6).
     */
    constructor(seed: number, layers: number, ell_max: number);
    /**
     * Runs `steps` Adam updates and returns the loss before the last one.
     */
    train(steps: number, learning_rate: number): number;
    /**
     * Total variation distance between the model and the exact target.
     */
    tvd(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_distributions: (a: number) => [number, number, number, number];
    readonly demo_epochs: (a: number) => number;
    readonly demo_expectation: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_train: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_tvd: (a: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
