import net from 'node:net'
import { Transport } from '../src/transport.js'
import { Session } from '../src/session.js'

/** Raw TCP transport for driving the gateway from node tests. */
export function connectTcp(host: string, port: number): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const socket = net.createConnection({ host, port })
    socket.setEncoding('utf-8')
    const dataCbs: Array<(chunk: string) => void> = []
    const closeCbs: Array<() => void> = []
    socket.on('connect', () => {
      resolve({
        send: (data) => socket.write(data),
        close: () => socket.end(),
        onData: (cb) => dataCbs.push(cb),
        onClose: (cb) => closeCbs.push(cb),
      })
    })
    socket.on('error', reject)
    socket.on('data', (chunk: string) => {
      for (const cb of dataCbs) cb(chunk)
    })
    socket.on('close', () => {
      for (const cb of closeCbs) cb()
    })
  })
}

/** In-memory transport: tests feed inbound chunks and inspect outbound lines. */
export class FakeTransport implements Transport {
  sent: string[] = []
  private dataCbs: Array<(chunk: string) => void> = []
  private closeCbs: Array<() => void> = []

  send(data: string): void {
    this.sent.push(data)
  }

  close(): void {
    this.emitClose()
  }

  onData(cb: (chunk: string) => void): void {
    this.dataCbs.push(cb)
  }

  onClose(cb: () => void): void {
    this.closeCbs.push(cb)
  }

  push(frame: object): void {
    const chunk = JSON.stringify(frame) + '\n'
    for (const cb of this.dataCbs) cb(chunk)
  }

  pushRaw(chunk: string): void {
    for (const cb of this.dataCbs) cb(chunk)
  }

  emitClose(): void {
    for (const cb of this.closeCbs) cb()
  }
}

export function waitFor(
  session: Session, predicate: () => boolean, timeoutMs = 20000, what = 'condition',
): Promise<void> {
  return new Promise((resolve, reject) => {
    if (predicate()) {
      resolve()
      return
    }
    const timer = setTimeout(
      () => reject(new Error(`timed out waiting for ${what}`)), timeoutMs)
    session.onChange(() => {
      if (predicate()) {
        clearTimeout(timer)
        resolve()
      }
    })
  })
}
