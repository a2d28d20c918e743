#pragma once

#include "gyrofield/diffusion.hpp"
#include "gyrofield/error.hpp"
#include "gyrofield/field.hpp"
#include "gyrofield/image.hpp"
#include "gyrofield/io.hpp"
#include "gyrofield/metrics.hpp"
#include "gyrofield/parallel.hpp"
#include "gyrofield/rotation.hpp"
#include "gyrofield/synth.hpp"
#include "gyrofield/testvectors.hpp"
