/**
 * Wire protocol frames for the session gateway.
 *
 * One bidirectional stream of newline-delimited JSON, FIFO per direction.
 * The console sends InboundFrame objects and renders only what arrives in
 * OutboundFrame objects.
 */

export type IntentFrame = { t: 'intent'; text: string }
export type PuzzleFrame = { t: 'puzzle'; piece_id: string }
export type StartFrame = { t: 'start' }
export type AbortFrame = { t: 'abort' }
export type InboundFrame = IntentFrame | PuzzleFrame | StartFrame | AbortFrame

export interface RobotView {
  id: number
  x: number
  y: number
  phase: string
  status: string
  cargo: string | null
  target: string | null
}

export interface ShadowView {
  thing_id: string
  version: number
  desired: Record<string, unknown>
  reported: Record<string, unknown>
  delta: Record<string, unknown>
  last_updated: number
}

export interface BriefFrame {
  t: 'brief'
  zone_assignments: Record<string, string>
  tasks: string[]
  seed: number
}

export interface StateFrame {
  t: 'state'
  now_ms: number
  robots: RobotView[]
  shadows: ShadowView[]
  done: boolean
}

export interface SpeechFrame {
  t: 'speech'
  from: string
  text: string
}

export interface MetricsFrame {
  t: 'metrics'
  now_ms: number
  report: Record<string, unknown>
}

export interface ErrorFrame {
  t: 'error'
  code: string
  msg: string
}

export type OutboundFrame = BriefFrame | StateFrame | SpeechFrame | MetricsFrame | ErrorFrame

const OUTBOUND_TYPES = new Set(['brief', 'state', 'speech', 'metrics', 'error'])

/** Parse one line from the gateway; null for anything unrecognizable. */
export function parseFrame(line: string): OutboundFrame | null {
  let value: unknown
  try {
    value = JSON.parse(line)
  } catch {
    return null
  }
  if (typeof value !== 'object' || value === null) return null
  const t = (value as { t?: unknown }).t
  if (typeof t !== 'string' || !OUTBOUND_TYPES.has(t)) return null
  return value as OutboundFrame
}

/** Serialize a console frame as one wire line (newline included). */
export function encodeFrame(frame: InboundFrame): string {
  return JSON.stringify(frame) + '\n'
}
