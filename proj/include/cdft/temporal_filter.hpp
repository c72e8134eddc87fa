#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cdft/logic.hpp"

namespace cdft {

/// Detector output for one frame: the category of every tracked object that
/// is present. An object missing from `tracks` was not detected.
struct FrameObservation {
  std::uint64_t frame_index = 0;
  std::map<ObjectId, std::string> tracks;

  friend bool operator==(const FrameObservation&, const FrameObservation&) = default;
};

/// Sliding window over the last K raw observations. Corrections are computed
/// from raw frames only, so the output for frame t depends on frames
/// t-K+1..t and nothing else.
class TemporalBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 5;

  /// Throws ConfigError when capacity is zero.
  explicit TemporalBuffer(std::size_t capacity = kDefaultCapacity);

  /// Appends the frame (evicting the oldest beyond K) and returns it with
  /// every object's category replaced by the window's most frequent one.
  /// An object missing from the new frame but present in at least ceil(K/2)
  /// window frames is filled in. Ties keep the new frame's raw category, or
  /// for a filled-in object the most recently seen of the tied categories.
  /// Throws OrderingError unless frame_index exceeds the previous one.
  FrameObservation push(FrameObservation obs);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return window_.size(); }
  const std::deque<FrameObservation>& window() const { return window_; }

 private:
  std::size_t capacity_;
  std::deque<FrameObservation> window_;
};

/// One frame of tracker output: categories plus the relations observed in it.
struct FrameFacts {
  FrameObservation observation;
  std::vector<GroundAtom> relations;
};

/// Reduces a frame stream to a single segment grounding. Frames are smoothed
/// through a K-frame buffer; each corrected category becomes a unary atom
/// when the signature declares a predicate of that name; relations are
/// unioned. A relation observed positively in any frame overrides an explicit
/// negation of it from another frame.
GroundingSet reduce_segment(const std::vector<FrameFacts>& frames, std::size_t buffer_k,
                            std::shared_ptr<const Signature> signature);

}  // namespace cdft
