#include "cdft/temporal_filter.hpp"

#include <set>

#include "cdft/error.hpp"

namespace cdft {

TemporalBuffer::TemporalBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("temporal buffer capacity must be positive");
}

FrameObservation TemporalBuffer::push(FrameObservation obs) {
  if (!window_.empty() && obs.frame_index <= window_.back().frame_index) {
    throw OrderingError("frame " + std::to_string(obs.frame_index) +
                        " does not follow frame " +
                        std::to_string(window_.back().frame_index));
  }
  window_.push_back(obs);
  if (window_.size() > capacity_) window_.pop_front();

  std::set<ObjectId> objects;
  for (const auto& f : window_) {
    for (const auto& [id, cat] : f.tracks) objects.insert(id);
  }
  const std::size_t fill_quorum = (capacity_ + 1) / 2;

  FrameObservation out{obs.frame_index, {}};
  for (const auto& id : objects) {
    std::map<std::string, std::size_t> counts;
    std::map<std::string, std::size_t> last_seen;  // window position
    std::size_t seen = 0;
    for (std::size_t pos = 0; pos < window_.size(); ++pos) {
      auto it = window_[pos].tracks.find(id);
      if (it == window_[pos].tracks.end()) continue;
      ++seen;
      ++counts[it->second];
      last_seen[it->second] = pos;
    }
    std::size_t best = 0;
    for (const auto& [cat, n] : counts) best = std::max(best, n);
    std::vector<std::string> tied;
    for (const auto& [cat, n] : counts) {
      if (n == best) tied.push_back(cat);
    }
    auto most_recent = [&] {
      const std::string* pick = &tied.front();
      for (const auto& c : tied) {
        if (last_seen[c] > last_seen[*pick]) pick = &c;
      }
      return *pick;
    };

    auto raw = obs.tracks.find(id);
    if (raw != obs.tracks.end()) {
      if (tied.size() == 1) {
        out.tracks[id] = tied.front();
      } else if (counts[raw->second] == best) {
        out.tracks[id] = raw->second;
      } else {
        out.tracks[id] = most_recent();
      }
    } else if (seen >= fill_quorum) {
      out.tracks[id] = tied.size() == 1 ? tied.front() : most_recent();
    }
  }
  return out;
}

GroundingSet reduce_segment(const std::vector<FrameFacts>& frames, std::size_t buffer_k,
                            std::shared_ptr<const Signature> signature) {
  TemporalBuffer buffer(buffer_k);
  std::set<GroundAtom> positive;
  std::set<GroundAtom> negated;
  for (const auto& frame : frames) {
    auto corrected = buffer.push(frame.observation);
    for (const auto& [id, cat] : corrected.tracks) {
      if (signature->arity(cat) == std::size_t{1}) {
        positive.insert(GroundAtom{cat, {id}, true});
      }
    }
    for (const auto& atom : frame.relations) {
      if (atom.positive) {
        positive.insert(atom);
      } else {
        negated.insert(atom);
      }
    }
  }
  std::vector<GroundAtom> atoms(positive.begin(), positive.end());
  for (const auto& atom : negated) {
    GroundAtom pos = atom;
    pos.positive = true;
    if (!positive.contains(pos)) atoms.push_back(atom);
  }
  return GroundingSet(std::move(signature), std::move(atoms));
}

}  // namespace cdft
