"""Generate the synthetic office maps shipped in maps/."""
import random
from collections import deque


def office(width, height, room_w, room_h, seed):
    g = [['#'] * width for _ in range(height)]
    for r in range(1, height - 1):
        for c in range(1, width - 1):
            g[r][c] = '.'
    rng = random.Random(seed)
    # Interior walls every room_w columns / room_h rows with doorways.
    for c in range(room_w + 1, width - 1, room_w + 1):
        for r in range(1, height - 1):
            g[r][c] = '#'
        for r0 in range(1, height - 1, room_h + 1):
            door = rng.randrange(r0, min(r0 + room_h, height - 1))
            g[door][c] = '.'
    for r in range(room_h + 1, height - 1, room_h + 1):
        for c in range(1, width - 1):
            g[r][c] = '#'
        for c0 in range(1, width - 1, room_w + 1):
            door = rng.randrange(c0, min(c0 + room_w, width - 1))
            g[r][door] = '.'
    return g


def connected(g):
    cells = [(r, c) for r, row in enumerate(g) for c, ch in enumerate(row) if ch == '.']
    seen = {cells[0]}
    q = deque([cells[0]])
    while q:
        r, c = q.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (r + dr, c + dc)
            if 0 <= n[0] < len(g) and 0 <= n[1] < len(g[0]) and g[n[0]][n[1]] == '.' and n not in seen:
                seen.add(n)
                q.append(n)
    return len(seen) == len(cells)


def locations(g):
    return sum(ch != '#' for row in g for ch in row)


def tune(g, target, seed):
    """Wall off or open interior cells until the location count hits target."""
    rng = random.Random(seed)
    h, w = len(g), len(g[0])
    interior = [(r, c) for r in range(1, h - 1) for c in range(1, w - 1)]
    while locations(g) != target:
        r, c = rng.choice(interior)
        if locations(g) > target and g[r][c] == '.':
            g[r][c] = '#'
            if not connected(g):
                g[r][c] = '.'
        elif locations(g) < target and g[r][c] == '#':
            g[r][c] = '.'
    return g


def add_sinks(g, k, seed):
    rng = random.Random(seed)
    free = [(r, c) for r, row in enumerate(g) for c, ch in enumerate(row) if ch == '.']
    placed = 0
    while placed < k:
        r, c = rng.choice(free)
        if g[r][c] != '.':
            continue
        g[r][c] = 'O'
        if connected(g):
            placed += 1
        else:
            g[r][c] = '.'
    return g


def write(path, g):
    with open(path, 'w') as f:
        f.write(f"{len(g[0])} {len(g)}\n")
        for row in g:
            f.write(''.join(row) + '\n')


if __name__ == '__main__':
    g = tune(office(24, 12, 5, 4, 1), 166, 2)
    write('maps/office166.map', add_sinks(g, 4, 3))
    write('maps/office300.map', tune(office(26, 18, 5, 5, 4), 300, 5))
    write('maps/tiny.map', [list(r) for r in ['#####', '#...#', '#.#.#', '#...#', '#####']])
