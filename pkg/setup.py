import re
import os

from setuptools import setup, find_packages

# temporarily redirect config directory to prevent matplotlib importing
# testing that for writeable directory which results in sandbox error in
# certain easy_install versions
os.environ["MPLCONFIGDIR"] = "."


def get_package_version(path):
    '''Extracts the version'''
    with open(path, "rt") as f:
        verstrline = f.read()

    VERSION = r"^version = ['\"]([^'\"]*)['\"]"
    results = re.search(VERSION, verstrline, re.M)

    if results:
        version = results.group(1)
    else:
        raise RuntimeError("Unable to find version string in {}.".format(path))

    return version


##
# Avoid forcing an upgrade of an already installed numerical stack
# when running pip install S2CLinkTools --upgrade
def check_dependencies():
    install_requires = []

    try:
        import numpy
    except ImportError:
        install_requires.append('numpy>=1.20')
    try:
        import scipy
    except ImportError:
        install_requires.append('scipy>=1.6')
    try:
        import matplotlib
    except ImportError:
        install_requires.append('matplotlib>=3.0')
    try:
        import pandas
    except ImportError:
        install_requires.append('pandas>=1.0')

    return install_requires


VERSION_FILE = "S2CLinkTools/_version.py"
version = get_package_version(VERSION_FILE)

with open('README.rst', 'r') as f:
    README_content = f.read()

install_requires = check_dependencies()
install_requires.append("setuptools")

setup(
    name='S2CLinkTools',
    packages=find_packages(),
    version=version,
    description='Simulate screen-to-camera visible light links and synchronize them with a CNN',
    license='MIT',
    keywords=['visible light communication', 'screen to camera', 'qr code', 'cnn',
              'frame synchronization'],
    python_requires='>=3.7',
    setup_requires=["numpy"],
    install_requires=install_requires,
    entry_points={
        'console_scripts': ['s2c-link=S2CLinkTools.cli:main'],
    },
    classifiers=[
        'Intended Audience :: Science/Research',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering',
        'Topic :: Communications',
    ],

    long_description=README_content,
    include_package_data=True,
)
