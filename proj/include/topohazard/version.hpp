#pragma once

#define TOPOHAZARD_VERSION "0.1.0"
