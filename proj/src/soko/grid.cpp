#include "sokorl/soko/grid.hpp"

#include <algorithm>
#include <sstream>

#include "sokorl/errors.hpp"

namespace sokorl::soko {

bool SokoGrid::box_at(int idx) const {
  return std::binary_search(boxes.begin(), boxes.end(), static_cast<uint8_t>(idx));
}

bool SokoGrid::solved() const {
  for (uint8_t b : boxes)
    if (!targets[b]) return false;
  return !boxes.empty();
}

void SokoGrid::validate() const {
  if (walls[agent]) throw InconsistentLabel("agent on a wall cell");
  if (box_at(agent)) throw InconsistentLabel("agent on a box cell");
  for (size_t i = 0; i + 1 < boxes.size(); ++i)
    if (boxes[i] >= boxes[i + 1]) throw InconsistentLabel("boxes not sorted-distinct");
  int tcount = 0;
  for (int i = 0; i < kCells; ++i) {
    if (targets[i]) ++tcount;
    if (targets[i] && walls[i]) throw InconsistentLabel("target on a wall cell");
  }
  for (uint8_t b : boxes)
    if (walls[b]) throw InconsistentLabel("box on a wall cell");
  if (tcount != static_cast<int>(boxes.size()))
    throw InconsistentLabel("box count differs from target count");
  for (int x = 0; x < kN; ++x)
    if (!wall_at(x, 0) || !wall_at(x, kN - 1)) throw InconsistentLabel("open border cell");
  for (int y = 0; y < kN; ++y)
    if (!wall_at(0, y) || !wall_at(kN - 1, y)) throw InconsistentLabel("open border cell");
}

MoveResult apply_move(const SokoGrid& grid, Move move) {
  MoveResult res;
  res.grid = grid;
  const bool was_solved = grid.solved();
  const int ax = cell_x(grid.agent), ay = cell_y(grid.agent);
  const int nx = ax + move_dx(move), ny = ay + move_dy(move);
  if (!in_bounds(nx, ny)) return res;
  const int dest = cell_index(nx, ny);
  if (grid.walls[dest]) return res;

  if (grid.box_at(dest)) {
    const int bx = nx + move_dx(move), by = ny + move_dy(move);
    if (!in_bounds(bx, by)) return res;
    const int bdest = cell_index(bx, by);
    if (grid.walls[bdest] || grid.box_at(bdest)) return res;
    auto& bs = res.grid.boxes;
    bs.erase(std::find(bs.begin(), bs.end(), static_cast<uint8_t>(dest)));
    bs.insert(std::upper_bound(bs.begin(), bs.end(), static_cast<uint8_t>(bdest)),
              static_cast<uint8_t>(bdest));
    res.pushed = true;
    if (grid.targets[bdest] && !grid.targets[dest]) res.reward += 1.0f;
    if (!grid.targets[bdest] && grid.targets[dest]) res.reward -= 1.0f;
  }
  res.grid.agent = static_cast<uint8_t>(dest);
  res.moved = true;
  res.solved = res.grid.solved();
  if (res.solved && !was_solved) res.reward += 10.0f;
  return res;
}

uint64_t AbstractState::fingerprint() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& c : ch)
    for (uint8_t v : c) {
      h ^= v;
      h *= 1099511628211ull;
    }
  return h;
}

int AbstractState::agent_cell() const {
  for (int i = 0; i < kCells; ++i)
    if (ch[kAgent][i]) return i;
  return -1;
}

AbstractState to_abstract(const SokoGrid& grid) {
  AbstractState s;
  for (int i = 0; i < kCells; ++i) {
    s.ch[AbstractState::kWall][i] = grid.walls[i] ? 1 : 0;
    s.ch[AbstractState::kTarget][i] = grid.targets[i] ? 1 : 0;
  }
  for (uint8_t b : grid.boxes) s.ch[AbstractState::kBox][b] = 1;
  s.ch[AbstractState::kAgent][grid.agent] = 1;
  return s;
}

SokoGrid to_grid(const AbstractState& s) {
  SokoGrid g;
  int agents = 0;
  for (int i = 0; i < kCells; ++i) {
    g.walls[i] = s.ch[AbstractState::kWall][i] != 0;
    g.targets[i] = s.ch[AbstractState::kTarget][i] != 0;
    if (s.ch[AbstractState::kBox][i]) g.boxes.push_back(static_cast<uint8_t>(i));
    if (s.ch[AbstractState::kAgent][i]) {
      g.agent = static_cast<uint8_t>(i);
      ++agents;
    }
  }
  if (agents != 1) throw UnsolvableState("abstract state has " + std::to_string(agents) +
                                         " agent cells");
  try {
    g.validate();
  } catch (const InconsistentLabel& e) {
    throw UnsolvableState(std::string("abstract state is not a legal position: ") + e.what());
  }
  return g;
}

std::string to_text(const SokoGrid& grid) {
  std::string out;
  out.reserve((kN + 1) * kN);
  for (int y = kN - 1; y >= 0; --y) {
    for (int x = 0; x < kN; ++x) {
      const int i = cell_index(x, y);
      char c = ' ';
      if (grid.walls[i]) {
        c = '#';
      } else {
        const bool box = grid.box_at(i), tgt = grid.targets[i];
        const bool agl = grid.agent == i;
        if (box && tgt)
          c = '*';
        else if (box)
          c = '$';
        else if (agl && tgt)
          c = '+';
        else if (agl)
          c = '@';
        else if (tgt)
          c = '.';
      }
      out.push_back(c);
    }
    out.push_back('\n');
  }
  return out;
}

SokoGrid parse_grid(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) lines.push_back(line);
  if (static_cast<int>(lines.size()) != kN)
    throw ConfigError("level text must have 10 rows, got " + std::to_string(lines.size()));
  SokoGrid g;
  bool agent_seen = false;
  for (int r = 0; r < kN; ++r) {
    const std::string& row = lines[static_cast<size_t>(r)];
    if (static_cast<int>(row.size()) != kN)
      throw ConfigError("level row must have 10 cells, got " + std::to_string(row.size()));
    const int y = kN - 1 - r;
    for (int x = 0; x < kN; ++x) {
      const int i = cell_index(x, y);
      switch (row[static_cast<size_t>(x)]) {
        case '#': g.walls[i] = true; break;
        case ' ': break;
        case '.': g.targets[i] = true; break;
        case '$': g.boxes.push_back(static_cast<uint8_t>(i)); break;
        case '*':
          g.boxes.push_back(static_cast<uint8_t>(i));
          g.targets[i] = true;
          break;
        case '@':
          g.agent = static_cast<uint8_t>(i);
          agent_seen = true;
          break;
        case '+':
          g.agent = static_cast<uint8_t>(i);
          g.targets[i] = true;
          agent_seen = true;
          break;
        default:
          throw ConfigError(std::string("unknown level character '") + row[static_cast<size_t>(x)] + "'");
      }
    }
  }
  if (!agent_seen) throw ConfigError("level has no agent");
  std::sort(g.boxes.begin(), g.boxes.end());
  g.validate();
  return g;
}

std::vector<SokoGrid> parse_levels(const std::string& text) {
  std::vector<SokoGrid> grids;
  std::istringstream is(text);
  std::string line, block;
  int rows = 0;
  auto flush = [&]() {
    if (rows == kN) grids.push_back(parse_grid(block));
    else if (rows != 0)
      throw ConfigError("level block with " + std::to_string(rows) + " rows");
    block.clear();
    rows = 0;
  };
  while (std::getline(is, line)) {
    if (line.empty()) {
      flush();
    } else {
      block += line;
      block.push_back('\n');
      ++rows;
    }
  }
  flush();
  return grids;
}

std::string to_levels_text(const std::vector<SokoGrid>& grids) {
  std::string out;
  for (size_t i = 0; i < grids.size(); ++i) {
    if (i) out.push_back('\n');
    out += to_text(grids[i]);
  }
  return out;
}

}  // namespace sokorl::soko
