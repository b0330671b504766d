#pragma once

#include "detector.hpp"
#include "evaluation.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "mapper.hpp"
#include "matcher.hpp"
#include "phantom.hpp"
#include "projector.hpp"
#include "serialize.hpp"
#include "volume.hpp"
