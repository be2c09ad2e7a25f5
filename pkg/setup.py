from setuptools import setup


def get_requirements(requirements_file='requirements.txt'):
    with open(requirements_file) as f:
        return [
            line.split('#')[0].rstrip()
            for line in f.readlines()
            if not line.startswith('#')
            ]


setup(
    name="bcnet",
    version="0.1.0",
    author="bcnet developers",
    description="Three-state (Blume-Capel) network models: simulation, mean field, "
                "sparse estimation and confidence intervals",
    license="LGPLv2+",
    packages=[
        'bcnet',
    ],
    install_requires=get_requirements(),
    python_requires=">=3.6",
    entry_points={
        'console_scripts': [
            'bcnet = bcnet.cli:main',
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: GNU Lesser General Public License v2"
        " or later (LGPLv2+)",
    ],
)
