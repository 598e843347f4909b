/**
 * Transport abstraction: the session logic only needs a duplex text pipe.
 * The browser implementation speaks WebSocket (through the ws-bridge in
 * front of the TCP gateway); tests inject a raw TCP or fake transport.
 */

export interface Transport {
  send(data: string): void
  close(): void
  onData(cb: (chunk: string) => void): void
  onClose(cb: () => void): void
}

export class ConnectionFailed extends Error {}

/** Connect a WebSocket transport; resolves once the socket is open. */
export function connectWebSocket(url: string): Promise<Transport> {
  return new Promise((resolve, reject) => {
    let ws: WebSocket
    try {
      ws = new WebSocket(url)
    } catch (err) {
      reject(new ConnectionFailed(String(err)))
      return
    }
    const dataCbs: Array<(chunk: string) => void> = []
    const closeCbs: Array<() => void> = []
    ws.onopen = () => {
      resolve({
        send: (data) => ws.send(data),
        close: () => ws.close(),
        onData: (cb) => dataCbs.push(cb),
        onClose: (cb) => closeCbs.push(cb),
      })
    }
    ws.onerror = () => reject(new ConnectionFailed(`cannot reach ${url}`))
    ws.onmessage = (ev) => {
      const text = typeof ev.data === 'string' ? ev.data : ''
      for (const cb of dataCbs) cb(text)
    }
    ws.onclose = () => {
      for (const cb of closeCbs) cb()
    }
  })
}
