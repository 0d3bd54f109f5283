'''
specdfa command line
'''

# There are 2 specdfa entry points: __main__.py and specdfa.commandline().
# __main__.py is run by python -m specdfa.
# specdfa.commandline() is run by the specdfa console script.

import sys
import specdfa

sys.exit(specdfa.commandline())
