/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    detectorSize(): number;
    /**
     * Per-pixel MSE of the last reconstruction, NaN before the first one.
     */
    lastMse(): number;
    /**
     * Builds the model and the reduction plan; the plan is the slow part.
     */
    constructor(pattern: string, photons: number, noise_photons: number);
    /**
     * Reconstructs the last measurement; `basis` is `none`, `dct` or `haar`.
     */
    reconstruct(basis: string, lambda: number): Uint8Array;
    /**
     * Draws a measurement and returns the first arm's detector counts, scaled to
     * their maximum.
     */
    simulate(seed: bigint): Uint8Array;
    size(): number;
    truthRgba(): Uint8Array;
    /**
     * Per-pixel MSE bound of the unconstrained linear estimate.
     */
    worstCaseMse(): number;
}

/**
 * Focal length that images the object onto the detector of `arm` (2, 3 or 4)
 * for the given lens distances, with the default wavenumbers.
 */
export function focalLength(arm: number, l1: number, l2: number): number;

export function imageMagnification(arm: number, l1: number, l2: number): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_detectorSize: (a: number) => number;
    readonly demo_lastMse: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly demo_reconstruct: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_simulate: (a: number, b: bigint) => [number, number, number, number];
    readonly demo_size: (a: number) => number;
    readonly demo_truthRgba: (a: number) => [number, number];
    readonly demo_worstCaseMse: (a: number) => number;
    readonly focalLength: (a: number, b: number, c: number) => [number, number, number];
    readonly imageMagnification: (a: number, b: number, c: number) => [number, number, number];
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
