from setuptools import setup, find_packages
import os
import subprocess

# record the commit the package was built from; outside a git checkout keep what is there
versionFile = "src/privstream/shared/version.py"
try:
    git_commit = subprocess.check_output(['git', 'rev-parse', 'HEAD'], encoding="ascii",
                                         stderr=subprocess.DEVNULL).strip()
except (OSError, subprocess.CalledProcessError):
    git_commit = None
if git_commit:
    with open(versionFile, 'w') as versionFH:
        versionFH.write("privstream_commit = '%s'\n" % git_commit)
elif not os.path.exists(versionFile):
    with open(versionFile, 'w') as versionFH:
        versionFH.write("privstream_commit = 'unknown'\n")

setup(
    name = "Privstream",
    version = "0.3.0",
    description = "Privacy-preserving stream analytics: randomized response answers written anonymously "
                  "through XOR distributed point functions",
    package_dir = {'': 'src'},
    packages = find_packages(where='src'),
    include_package_data = True,
    package_data = {
        'privstream': ['*_config.xml']
    },
    # We use the __file__ attribute so this package isn't zip_safe.
    zip_safe = False,

    python_requires = '>=3.8',

    install_requires = [
        'numpy>=1.20',
        'cryptography>=3.4',
        'pytest',
        'hypothesis',
        'toil==7.0.0'],

    entry_points= {
        'console_scripts': ['privstream = privstream.harness.privstream_cli:main']},)
