export class ExportError extends Error {}

/** A layer kind or tensor the exporter does not handle. */
export class UnsupportedLayer extends ExportError {}

/** Adjacent layers whose tensor shapes do not compose. */
export class ShapeChainBroken extends ExportError {}

/** Malformed checkpoint or map file. */
export class CheckpointError extends ExportError {}
