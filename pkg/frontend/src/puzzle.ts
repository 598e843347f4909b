/**
 * The distraction jigsaw: an N-piece grid where each piece has exactly one
 * correct slot. A correct drop locks the piece; a wrong drop snaps back and
 * must not emit anything.
 */

export type PlaceResult = 'locked' | 'wrong-slot' | 'already-placed' | 'unknown-piece'

export interface Piece {
  id: string
  slot: string
  placed: boolean
}

export class PuzzleBoard {
  readonly pieces: Piece[]

  constructor(count = 16) {
    this.pieces = []
    for (let i = 0; i < count; i++) {
      this.pieces.push({ id: `piece-${i}`, slot: `slot-${i}`, placed: false })
    }
  }

  piece(id: string): Piece | undefined {
    return this.pieces.find((p) => p.id === id)
  }

  tryPlace(pieceId: string, slotId: string): PlaceResult {
    const piece = this.piece(pieceId)
    if (!piece) return 'unknown-piece'
    if (piece.placed) return 'already-placed'
    if (piece.slot !== slotId) return 'wrong-slot'
    piece.placed = true
    return 'locked'
  }

  get placedCount(): number {
    return this.pieces.filter((p) => p.placed).length
  }

  get complete(): boolean {
    return this.placedCount === this.pieces.length
  }
}
