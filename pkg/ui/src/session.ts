/**
 * Client-side session for the experiment service.
 *
 * Works both in a browser (native WebSocket) and under Node (pass the
 * `ws` constructor as the factory).  Incoming frames are validated with
 * the zod schemas in protocol.ts; callers register plain callbacks.
 */

import { Ack, Command, ErrorMsg, Frame, Snapshot, parseFrame } from "./protocol.js";

/** The slice of the WebSocket API the session actually uses. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "open", cb: () => void): void;
  addEventListener(type: "close", cb: () => void): void;
  addEventListener(type: "message", cb: (ev: { data: unknown }) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface SessionCallbacks {
  onSnapshot?(snap: Snapshot): void;
  onAck?(ack: Ack): void;
  onError?(err: ErrorMsg): void;
  onOpen?(): void;
  onClose?(willReconnect: boolean): void;
}

export class ExperimentClient {
  private socket: SocketLike | null = null;
  private closedByUs = false;
  private reconnectDelayMs = 250;
  private pending: string[] = [];

  constructor(
    private readonly url: string,
    private readonly factory: SocketFactory,
    private readonly callbacks: SessionCallbacks = {},
  ) {}

  /** Commands sent but not yet acknowledged, oldest first. */
  get pendingCommands(): string[] {
    return this.pending.slice();
  }

  connect(): void {
    this.closedByUs = false;
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.addEventListener("open", () => {
      this.reconnectDelayMs = 250;
      this.callbacks.onOpen?.();
    });
    sock.addEventListener("message", (ev) => {
      let frame: Frame;
      try {
        frame = parseFrame(String(ev.data));
      } catch {
        return; // not a protocol frame; ignore
      }
      this.dispatch(frame);
    });
    sock.addEventListener("close", () => {
      if (this.socket !== sock) return;
      this.socket = null;
      this.pending = [];
      const reconnect = !this.closedByUs;
      this.callbacks.onClose?.(reconnect);
      if (reconnect) {
        const delay = this.reconnectDelayMs;
        this.reconnectDelayMs = Math.min(delay * 2, 8000);
        setTimeout(() => this.connect(), delay);
      }
    });
  }

  close(): void {
    this.closedByUs = true;
    this.socket?.close();
  }

  send(command: Command): void {
    if (this.socket === null) throw new Error("not connected");
    this.socket.send(JSON.stringify(command));
    if (command.type !== "shutdown") this.pending.push(command.type);
  }

  // Convenience wrappers for the commands the panel uses.
  setAttr(path: string, attr: string, value: number | boolean): void {
    this.send({ type: "set_attr", path, attr, value });
  }
  injectMessage(path: string, port: string, name: string): void {
    this.send({ type: "inject", path, port, name, kind: "message", args: [] });
  }
  pause(): void { this.send({ type: "pause" }); }
  resume(): void { this.send({ type: "resume" }); }
  step(n = 1): void { this.send({ type: "step", n }); }
  setSpeed(speed: number): void { this.send({ type: "set_speed", speed }); }
  shutdown(): void { this.send({ type: "shutdown" }); }

  private dispatch(frame: Frame): void {
    switch (frame.type) {
      case "snapshot":
        this.callbacks.onSnapshot?.(frame);
        break;
      case "ack": {
        const i = this.pending.indexOf(frame.command);
        if (i >= 0) this.pending.splice(i, 1);
        this.callbacks.onAck?.(frame);
        break;
      }
      case "error":
        // errors answer the oldest unacknowledged command, except
        // E_RUNTIME which is a broadcast
        if (frame.code !== "E_RUNTIME") this.pending.shift();
        this.callbacks.onError?.(frame);
        break;
    }
  }
}
