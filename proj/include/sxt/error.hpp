#pragma once

#include <stdexcept>
#include <string>

namespace sxt {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error { using Error::Error; };

// geometry
struct RayParallelToDetector : Error { using Error::Error; };
struct BehindSource : Error { using Error::Error; };
struct EmptyCurve : Error { using Error::Error; };
struct ParallelRays : Error { using Error::Error; };

// phantom
struct DegenerateRecipe : Error { using Error::Error; };
struct FeatureOutsideGrid : Error { using Error::Error; };

// projector / mapper
struct SourceInsideVolume : Error { using Error::Error; };
struct GeometryMismatch : Error { using Error::Error; };
struct AllSamplesDegenerate : Error { using Error::Error; };

// detector
struct BlockLargerThanImage : Error { using Error::Error; };
struct EmptyTrainingSet : Error { using Error::Error; };

// matcher
struct NoViews : Error { using Error::Error; };
struct ToleranceNonPositive : Error { using Error::Error; };

// evaluation
struct ShapeMismatch : Error { using Error::Error; };
struct AllSameTruthClass : Error { using Error::Error; };

}  // namespace sxt
