// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace frag {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FRAG_DEFINE_ERROR(Name)            \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

FRAG_DEFINE_ERROR(ShapeMismatch);
FRAG_DEFINE_ERROR(NonFiniteValue);
FRAG_DEFINE_ERROR(LayerOutOfRange);
FRAG_DEFINE_ERROR(FormatError);
FRAG_DEFINE_ERROR(ChecksumMismatch);
FRAG_DEFINE_ERROR(IoError);
FRAG_DEFINE_ERROR(DegeneratePlane);
FRAG_DEFINE_ERROR(CoordinateOutOfRange);
FRAG_DEFINE_ERROR(SingleClassDataset);
FRAG_DEFINE_ERROR(DivergedLoss);
FRAG_DEFINE_ERROR(InsufficientClassSamples);
FRAG_DEFINE_ERROR(AllTripletsDegenerate);
FRAG_DEFINE_ERROR(DegenerateInput);
FRAG_DEFINE_ERROR(InvalidArgument);

#undef FRAG_DEFINE_ERROR

}  // namespace frag
