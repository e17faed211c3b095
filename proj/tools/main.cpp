#include "cli.hpp"

int main(int argc, char** argv)
{
  return genprior::cli::run(argc, argv);
}
