/**
 * Browser UI: renders the session view and wires drag-and-drop puzzle input.
 * Everything shown comes from the Session object, which in turn only holds
 * server-sent state.
 */
import { RobotView } from './protocol.js'
import { Session } from './session.js'
import { ConnectionFailed, connectWebSocket } from './transport.js'

const GRID = 20
const CELL = 22

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag)
  if (className) node.className = className
  if (text !== undefined) node.textContent = text
  return node
}

const ZONES: Record<string, [number, number]> = {
  A: [2, 17], B: [17, 17], C: [2, 2], D: [17, 2], Loading: [10, 0],
}

function renderWorld(container: HTMLElement, robots: RobotView[]): void {
  container.innerHTML = ''
  const svgNS = 'http://www.w3.org/2000/svg'
  const svg = document.createElementNS(svgNS, 'svg')
  svg.setAttribute('width', String(GRID * CELL))
  svg.setAttribute('height', String(GRID * CELL))
  svg.setAttribute('class', 'world')
  const toPx = (x: number, y: number): [number, number] =>
    [x * CELL + CELL / 2, (GRID - 1 - y) * CELL + CELL / 2]

  for (const [name, [zx, zy]] of Object.entries(ZONES)) {
    const [px, py] = toPx(zx, zy)
    const rect = document.createElementNS(svgNS, 'rect')
    rect.setAttribute('x', String(px - CELL * 1.4))
    rect.setAttribute('y', String(py - CELL * 1.4))
    rect.setAttribute('width', String(CELL * 2.8))
    rect.setAttribute('height', String(CELL * 2.8))
    rect.setAttribute('class', 'zone')
    svg.appendChild(rect)
    const label = document.createElementNS(svgNS, 'text')
    label.setAttribute('x', String(px))
    label.setAttribute('y', String(py + 4))
    label.setAttribute('class', 'zone-label')
    label.textContent = name
    svg.appendChild(label)
  }
  for (const robot of robots) {
    const [px, py] = toPx(robot.x, robot.y)
    const dot = document.createElementNS(svgNS, 'circle')
    dot.setAttribute('cx', String(px))
    dot.setAttribute('cy', String(py))
    dot.setAttribute('r', String(CELL * 0.45))
    dot.setAttribute('class', `robot robot-${robot.id}${robot.cargo ? ' loaded' : ''}`)
    svg.appendChild(dot)
    const label = document.createElementNS(svgNS, 'text')
    label.setAttribute('x', String(px))
    label.setAttribute('y', String(py - CELL * 0.7))
    label.setAttribute('class', 'robot-label')
    label.textContent = `${robot.id}: ${robot.status}`
    svg.appendChild(label)
  }
  container.appendChild(svg)
}

function renderPuzzle(session: Session, tray: HTMLElement, board: HTMLElement): void {
  tray.innerHTML = ''
  board.innerHTML = ''
  for (const piece of session.puzzle.pieces) {
    const slot = el('div', 'slot')
    slot.dataset['slotId'] = piece.slot
    if (piece.placed) {
      slot.classList.add('filled')
      slot.appendChild(el('div', 'piece locked', piece.id.replace('piece-', '')))
    } else {
      slot.addEventListener('dragover', (ev) => ev.preventDefault())
      slot.addEventListener('drop', (ev) => {
        ev.preventDefault()
        const pieceId = ev.dataTransfer?.getData('text/plain')
        if (pieceId) session.placePuzzlePiece(pieceId, piece.slot)
      })
    }
    board.appendChild(slot)
  }
  for (const piece of session.puzzle.pieces) {
    if (piece.placed) continue
    const node = el('div', 'piece', piece.id.replace('piece-', ''))
    node.draggable = true
    node.addEventListener('dragstart', (ev) => {
      ev.dataTransfer?.setData('text/plain', piece.id)
    })
    tray.appendChild(node)
  }
}

function fmt(value: unknown): string {
  if (typeof value === 'number') return value.toFixed(value % 1 === 0 ? 0 : 3)
  if (value === null || value === undefined) return '-'
  return String(value)
}

export function mountConsole(root: HTMLElement): void {
  const session = new Session()

  const banner = el('div', 'banner', 'Not connected')
  const connectRow = el('div', 'row')
  const addrInput = el('input') as HTMLInputElement
  addrInput.value = 'ws://127.0.0.1:8766'
  const connectBtn = el('button', '', 'Connect')
  const startBtn = el('button', '', 'Start run')
  startBtn.disabled = true
  connectRow.append(addrInput, connectBtn, startBtn)

  const briefBox = el('div', 'brief')
  const world = el('div', 'panel world-panel')
  const transcriptBox = el('div', 'panel transcript')
  const intentRow = el('div', 'row')
  const intentInput = el('input') as HTMLInputElement
  intentInput.placeholder = 'say something, e.g. send placebot 1 to the loading zone'
  const sendBtn = el('button', '', 'Send')
  intentRow.append(intentInput, sendBtn)
  const metricsBox = el('div', 'panel metrics')
  const puzzleTray = el('div', 'tray')
  const puzzleBoard = el('div', 'board')
  const puzzlePanel = el('div', 'panel puzzle')
  puzzlePanel.append(el('h3', '', 'Distraction puzzle'), puzzleBoard, puzzleTray)

  root.append(banner, connectRow, briefBox, world, transcriptBox, intentRow,
              metricsBox, puzzlePanel)

  function render(): void {
    banner.textContent = session.done ? 'Run complete'
      : session.connection === 'connected' ? 'Connected' : 'Not connected'
    banner.className = `banner ${session.connection}${session.done ? ' done' : ''}`
    startBtn.disabled = session.connection !== 'connected' || session.started

    if (session.brief) {
      const zones = Object.entries(session.brief.zone_assignments)
        .map(([rid, zone]) => `placebot ${rid} -> zone ${zone}`).join(', ')
      briefBox.textContent = `Brief: tasks ${session.brief.tasks.join(', ')}; ${zones}`
    }
    renderWorld(world, session.lastState?.robots ?? [])

    transcriptBox.innerHTML = ''
    for (const entry of session.transcript.slice(-12)) {
      transcriptBox.appendChild(el('div', `line ${entry.from}`, `${entry.from}: ${entry.text}`))
    }

    const report = session.lastMetrics?.report
    if (report) {
      metricsBox.textContent =
        `IE ${fmt(report['ie_s'])}s | NT ${fmt(report['nt_s'])}s | ` +
        `RAD ${fmt(report['rad'])} | FO ${fmt(report['fo_s'])}s | ` +
        `pieces ${fmt(report['solved_puzzle_parts'])}`
    }
    renderPuzzle(session, puzzleTray, puzzleBoard)
  }

  session.onChange(render)

  connectBtn.addEventListener('click', async () => {
    banner.textContent = 'Connecting...'
    try {
      session.attach(await connectWebSocket(addrInput.value))
    } catch (err) {
      if (err instanceof ConnectionFailed) {
        banner.textContent = `Connection failed: ${err.message} (check gateway + bridge, retry)`
        banner.className = 'banner failed'
        return
      }
      throw err
    }
  })
  startBtn.addEventListener('click', () => session.start())
  const submit = (): void => {
    const text = intentInput.value.trim()
    if (!text) return
    intentInput.value = ''
    session.sendIntent(text)
  }
  sendBtn.addEventListener('click', submit)
  intentInput.addEventListener('keydown', (ev) => {
    if (ev.key === 'Enter') submit()
  })

  render()
}
