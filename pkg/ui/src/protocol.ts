/**
 * Wire protocol of the experiment service (see docs/protocol.md in the
 * repository root).  Every server frame is validated with zod before the
 * rest of the client sees it.
 */

import { z } from "zod";

export const SnapshotFrame = z.object({
  type: z.literal("snapshot"),
  tick: z.number().int().nonnegative(),
  time: z.number(),
  behind_ms: z.number().nonnegative(),
  signals: z.record(z.string(), z.number()),
  fsm_states: z.record(z.string(), z.string()),
});
export type Snapshot = z.infer<typeof SnapshotFrame>;

export const AckFrame = z.object({
  type: z.literal("ack"),
  command: z.string(),
  tick: z.number().int().nonnegative(),
});
export type Ack = z.infer<typeof AckFrame>;

export const ErrorFrame = z.object({
  type: z.literal("error"),
  code: z.enum(["E_TUNABLE", "E_PROTOCOL", "E_RUNTIME"]),
  message: z.string(),
});
export type ErrorMsg = z.infer<typeof ErrorFrame>;

export const ServerFrame = z.discriminatedUnion("type", [
  SnapshotFrame,
  AckFrame,
  ErrorFrame,
]);
export type Frame = z.infer<typeof ServerFrame>;

export type Command =
  | { type: "set_attr"; path: string; attr: string; value: number | boolean }
  | { type: "inject"; path: string; port: string; name: string;
      kind: "message" | "method"; args: unknown[] }
  | { type: "pause" }
  | { type: "resume" }
  | { type: "step"; n: number }
  | { type: "set_speed"; speed: number }
  | { type: "subscribe"; signals?: string[] }
  | { type: "shutdown" };

/** Parse one incoming text frame; throws on anything malformed. */
export function parseFrame(text: string): Frame {
  return ServerFrame.parse(JSON.parse(text));
}
