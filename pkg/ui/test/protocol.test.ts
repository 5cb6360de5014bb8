import { describe, expect, it } from "vitest";

import { parseFrame } from "../src/protocol.js";

describe("protocol frames", () => {
  it("accepts a snapshot frame", () => {
    const frame = parseFrame(JSON.stringify({
      type: "snapshot",
      tick: 123,
      time: 1.23,
      behind_ms: 0.0,
      signals: { "root/cabin:temp_c": 21.97 },
      fsm_states: { "root/system/panel": "Auto" },
    }));
    expect(frame.type).toBe("snapshot");
    if (frame.type === "snapshot") {
      expect(frame.signals["root/cabin:temp_c"]).toBeCloseTo(21.97);
      expect(frame.fsm_states["root/system/panel"]).toBe("Auto");
    }
  });

  it("accepts ack and error frames", () => {
    const ack = parseFrame('{"type": "ack", "command": "pause", "tick": 7}');
    expect(ack).toEqual({ type: "ack", command: "pause", tick: 7 });

    const err = parseFrame(
      '{"type": "error", "code": "E_TUNABLE", "message": "nope"}');
    expect(err.type).toBe("error");
  });

  it("rejects unknown frame types and bad fields", () => {
    expect(() => parseFrame('{"type": "warp_ten"}')).toThrow();
    expect(() => parseFrame('{"type": "ack", "command": 5, "tick": 1}'))
      .toThrow();
    expect(() => parseFrame(
      '{"type": "error", "code": "E_BOGUS", "message": "x"}')).toThrow();
    expect(() => parseFrame("not json at all")).toThrow();
  });

  it("rejects snapshots with non-numeric signals", () => {
    expect(() => parseFrame(JSON.stringify({
      type: "snapshot", tick: 1, time: 0.01, behind_ms: 0,
      signals: { a: "high" }, fsm_states: {},
    }))).toThrow();
  });
});
