/**
 * Splits a stream of data on newlines to extract complete lines.
 * Handles partial reads by buffering the trailing incomplete line.
 */
export class LineSplitter {
  private buffer = ''
  private readonly onLine: (line: string) => void

  constructor(onLine: (line: string) => void) {
    this.onLine = onLine
  }

  feed(chunk: string): void {
    this.buffer += chunk
    const lines = this.buffer.split('\n')
    // last element is '' when the chunk ended on a newline, else a partial line
    this.buffer = lines.pop()!
    for (const line of lines) {
      if (line.length > 0) this.onLine(line)
    }
  }

  /** Flush a trailing unterminated line (stream end). */
  end(): void {
    if (this.buffer.length > 0) {
      const line = this.buffer
      this.buffer = ''
      this.onLine(line)
    }
  }
}
