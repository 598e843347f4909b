/**
 * Session view: the console's entire state machine.
 *
 * Strictly a thin client. Every displayed robot, shadow or metric value is
 * copied from a server frame; the only client-owned state is the puzzle
 * board geometry and the log of frames this console has sent (the audit
 * trail for the one-frame-per-placed-piece guarantee).
 */
import { LineSplitter } from './ndjson.js'
import {
  BriefFrame,
  ErrorFrame,
  InboundFrame,
  MetricsFrame,
  OutboundFrame,
  StateFrame,
  encodeFrame,
  parseFrame,
} from './protocol.js'
import { PlaceResult, PuzzleBoard } from './puzzle.js'
import { Transport } from './transport.js'

export type ConnectionState = 'connecting' | 'connected' | 'closed'

export interface TranscriptEntry {
  from: string
  text: string
}

export class Session {
  connection: ConnectionState = 'connecting'
  brief: BriefFrame | null = null
  started = false
  lastState: StateFrame | null = null
  lastMetrics: MetricsFrame | null = null
  transcript: TranscriptEntry[] = []
  errors: ErrorFrame[] = []
  readonly puzzle: PuzzleBoard
  /** Audit trail: every frame this console has put on the wire. */
  readonly framesSent: InboundFrame[] = []

  private transport: Transport | null = null
  private splitter: LineSplitter
  private listeners: Array<() => void> = []

  constructor(puzzlePieces = 16) {
    this.puzzle = new PuzzleBoard(puzzlePieces)
    this.splitter = new LineSplitter((line) => this.handleLine(line))
  }

  /** Bind a transport; rebinding after a drop resyncs from the next frames. */
  attach(transport: Transport): void {
    this.transport = transport
    this.splitter = new LineSplitter((line) => this.handleLine(line))
    this.connection = 'connected'
    transport.onData((chunk) => this.splitter.feed(chunk))
    transport.onClose(() => {
      this.connection = 'closed'
      this.notify()
    })
    this.notify()
  }

  onChange(cb: () => void): void {
    this.listeners.push(cb)
  }

  private notify(): void {
    for (const cb of this.listeners) cb()
  }

  private sendFrame(frame: InboundFrame): void {
    if (!this.transport || this.connection !== 'connected') {
      throw new Error('not connected')
    }
    this.framesSent.push(frame)
    this.transport.send(encodeFrame(frame))
  }

  start(): void {
    if (this.started) return
    this.started = true
    this.sendFrame({ t: 'start' })
    this.notify()
  }

  abort(): void {
    this.sendFrame({ t: 'abort' })
  }

  sendIntent(text: string): void {
    this.transcript.push({ from: 'operator', text })
    this.sendFrame({ t: 'intent', text })
    this.notify()
  }

  /**
   * Drop a piece on a slot. Exactly one puzzle frame goes out when the piece
   * locks; wrong slots snap back silently and locked pieces stay locked.
   */
  placePuzzlePiece(pieceId: string, slotId: string): PlaceResult {
    const result = this.puzzle.tryPlace(pieceId, slotId)
    if (result === 'locked') {
      this.sendFrame({ t: 'puzzle', piece_id: pieceId })
      this.notify()
    }
    return result
  }

  get done(): boolean {
    return this.lastState?.done ?? false
  }

  private handleLine(line: string): void {
    const frame: OutboundFrame | null = parseFrame(line)
    if (frame === null) return
    switch (frame.t) {
      case 'brief':
        this.brief = frame
        break
      case 'state':
        this.lastState = frame
        break
      case 'speech':
        this.transcript.push({ from: frame.from, text: frame.text })
        break
      case 'metrics':
        this.lastMetrics = frame
        break
      case 'error':
        this.errors.push(frame)
        this.transcript.push({ from: 'error', text: `${frame.code}: ${frame.msg}` })
        break
    }
    this.notify()
  }
}
