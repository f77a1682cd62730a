#include "dstls/cli.hpp"

int main(int argc, char** argv) { return dstls::cli::dispatch(argc, argv); }
