#pragma once

#include "fpfts/classical_heterodyne.hpp"
#include "fpfts/commands.hpp"
#include "fpfts/config.hpp"
#include "fpfts/detector_sim.hpp"
#include "fpfts/errors.hpp"
#include "fpfts/interferogram.hpp"
#include "fpfts/quantum_interference.hpp"
#include "fpfts/spectral_analysis.hpp"
#include "fpfts/spectrum.hpp"
#include "fpfts/wavepacket.hpp"
