#!/usr/bin/env python3
"""Regenerate the packaged default vocabulary.

The default vocab covers roughly a thousand of the most common English
words plus every word appearing in the packaged scenarios, each in up to
four surface forms (bare, leading-space, capitalized, both). Output is
deterministic: base words are ranked by a fixed embedded order, corpus
words alphabetically after them.

Usage: python scripts/gen_default_vocab.py
Writes src/discedge/data/default.vocab relative to the repo root.
"""

import os
import sys

import yaml

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from discedge.vocabbuild import build_entries, extract_word_counts, write_vocab

# Common English words in rough frequency order (function words, verbs and
# their inflections, everyday nouns/adjectives/adverbs, technical terms).
COMMON_WORDS = """
the of and to in is you that it he was for on are as with his they at be
this have from or one had by word but not what all were we when your can
said there use an each which she do how their if will up other about out
many then them these so some her would make like him into time has look
two more write go see number no way could people my than first water been
called who am its now find long down day did get come made may part over
new sound take only little work know place years live me back give most
very after things our just name good sentence man think say great where
help through much before line right too means old any same tell boy
following came want show also around form three small set put end does
another well large must big even such because turned here why asked went
men read need land different home us move try kind hand picture again
change off play spell air away animal house point page letters mother
answer found study still learn should world high every near add food
between own below country plants last school father keep trees never
started city earth eyes light thought head under story saw left few while
along might close something seemed next hard open example beginning life
always those both paper together got group often run important until
children side feet car miles night walked white sea began grow took river
four carry state once book hear stop without second later miss idea
enough eat face watch far really almost let above girl sometimes
mountains cut young talk soon list song being leave family body music
color stand sun questions fish area mark dog horse birds problem
complete room knew since ever piece told usually didn't friends easy
heard order red door sure become top ship across today during short
better best however low hours black products happened whole measure
remember early waves reached listen wind rock space covered fast several
hold himself toward five step morning passed vowel true hundred against
pattern numeral table north slowly money map farm pulled draw voice seen
cold cried plan notice south sing war ground fall king town I'll unit
figure certain field travel wood fire upon done English road half ten
fly gave box finally wait correct oh quickly person became shown minutes
strong verb stars front feel fact inches street decided contain course
surface produce building ocean class note nothing rest carefully
scientists inside wheels stay green known island week less machine base
ago stood plane system behind ran round boat game force brought
understand warm common bring explain dry though language shape deep
thousands yes clear equation yet government filled heat full hot check
object bread rule among noun power cannot able six size dark ball
material special heavy fine pair circle include built can't matter
square syllables perhaps bill felt suddenly test direction center
farmers ready anything divided general energy subject Europe moon
region return believe dance members picked simple cells paint mind love
cause rain exercise eggs train blue wish drop developed window
difference distance heart sit sum summer wall forest probably legs sat
main winter wide written length reason kept interest arms brother race
present beautiful store job edge past sign record finished discovered
wild happy beside gone sky glass million west lay weather root
instruments meet third months paragraph raised represent soft whether
clothes flowers shall teacher held describe drive cross speak solve
appear metal son either ice sleep village factors result jumped snow
ride care floor hill pushed baby buy century outside everything tall
already instead phrase soil bed copy free hope spring case laughed
nation quite type themselves temperature bright lead everyone method
section lake consonant within dictionary hair age amount scale pounds
although per broken moment tiny possible gold milk quiet natural lot
stone act build middle speed count cat someone sail rolled bear wonder
smiled angle fraction Africa killed melody bottom trip hole poor let's
fight surprise French died beat exactly remain dress iron couldn't
fingers row least catch climbed wrote shouted continued itself else
plains gas England burning design joined foot law ears grass you're
grew skin valley cents key president brown trouble cool cloud lost
sent symbols wear bad save experiment engine alone drawing east pay
single touch information express mouth yard equal decimal yourself
control practice report straight rise statement stick party seeds
suppose woman coast bank period wire choose clean visit bit whose
received garden please strange caught fell team God certainly guess
score forward stretched experience rose allow fear workers Washington
Greek women bought led march northern chance born level triangle
molecules repeated whole coming suggested grown value smell tools
conditions cows track arrived located sir seat division effect
underline view total
says saying makes making goes going gets getting knows knowing takes
taking sees seeing comes coming thinks thinking looks looking wants
wanted wanting uses using finds finding gives giving tells telling
working works calls calling tries tried trying asks asking needs needed
feels feeling becomes becoming leaves leaving puts putting keeps keeping
lets begins seems helps helping talks talking turns turning starts
starting shows showing hears hearing plays playing runs running moves
moving likes liked lives living believes believed holds holding brings
bringing happens happening writes writing provides provided sits sitting
stands standing loses losing pays paying meets meeting includes included
including continues sets setting learns learning changes changed
changing leads leading understands watches watching follows followed
stops stopping creates creating speaks speaking reads reading allows
allowed allowing adds added adding spends spent grows growing opens
opening walks walking wins winning offers offered offering remembers
loves loved considers considered appears appeared buys buying waits
waiting serves served serving dies dying sends sending expects expected
builds stays stayed staying falls falling cuts cutting reaches reaching
kills killing remains remaining suggests raises raising passes passing
sells selling requires required reports reported decides decides pulls
pulling returns returned explains explained hopes hoped hoping develops
carries carried breaks breaking receives receiving agrees agreed
supports supported hits hitting produces produced eats eating covers
covering catches chooses chosen causes caused points pointed wonders
wondered drops dropped dropping closes closed closing shares shared
sharing saves saved saving checks checked checking fixes fixed fixing
tests tested testing fails failed failing sounds sounded treats treated
joins joining wishes wished manages managed managing improves improved
increases increased decreases decreased reduces reduced removes removed
replaces replaced updates updated measures measured compares compared
defines defined describes described computes computed depends depended
applies applied avoids avoided detects detected handles handled occurs
occurred prints printed loads loaded stores storing connects connected
switches switched operates operated estimates estimated assumes assumed
converts converted combines combined collects collected selects selected
accepts accepted prevents prevented contains contained maintains
maintained determines determined performs performed generates generated
processes processed calculates calculated observes observed completes
completed executes executed responds responded adjusts adjusted
displays displayed records recorded limits limited results resulting
people person persons student students problem problems fact facts
company companies system systems program programs question government
governments numbers nights points homes rooms mothers areas months lots
rights studies books eyes jobs words business businesses issue issues
sides kinds heads houses service services friend fathers powers hours
games lines ends member laws cars cities community communities names
teams minute ideas kid kids bodies backs parent parents faces others
levels office offices doors health art wars history parties results
changes mornings reasons girls guy guys moments forces education
research industry market markets customer customers product price
prices project projects model models design designs process plans
device devices user users computer computers internet data file files
memory storage thread threads message messages request requests
response responses signal signals camera cameras image images video
videos screen screens button buttons display keyboard mouse phone
phones application applications interface interfaces database databases
server servers version versions update upgrades command commands input
inputs output outputs value values string strings integer integers
array arrays object objects class classes method methods parameter
parameters argument arguments loop loops condition statement statements
module modules library libraries framework frameworks package packages
document documents folder folders directory directories platform
platforms website websites email emails account accounts password
passwords security settings options features feature tool toolbox
position positions velocity acceleration distance angles radius frame
frames rate rates frequency frequencies voltage circuit circuits chip
chips board boards wire wires cable cables plug plugs socket sockets
pin pins joint joints arm gripper grippers payload payloads torque
speed speeds degree degrees radian radians meter meters centimeter
centimeters millimeter millimeters second seconds millisecond
milliseconds minute minutes weight weights mass force forces pressure
temperature temperatures humidity light lights sound sounds noise
signals feedback loop gain gains offset offsets threshold thresholds
target targets goal goals task tasks step steps stage stages phase
phases mode modes state states status event events action actions
able bad economic federal human international major military national
political public real recent social available likely medical current
wrong private foreign significant similar dead central serious physical
general environmental financial democratic various entire legal
religious final nice huge popular traditional cultural successful
effective useful useless helpful harmful careful careless difficult
simple complex complicated efficient inefficient reliable unreliable
accurate inaccurate precise stable unstable robust flexible rigid
smooth rough slow quick rapid gradual sudden constant variable linear
nonlinear digital analog electric electronic mechanical electrical
optical thermal magnetic chemical biological optimal minimal maximal
internal external local remote global virtual actual typical unusual
normal abnormal standard custom automatic manual active passive
positive negative absolute relative initial previous additional
extra necessary unnecessary sufficient insufficient relevant
irrelevant appropriate separate specific overall particular primary
secondary basic advanced modern ancient familiar unknown visible
invisible independent dependent consistent inconsistent continuous
discrete parallel serial empty solid liquid frozen wet
anyone anybody everybody somebody nobody someone something anything
nothing everything somewhere anywhere everywhere nowhere whatever
whenever wherever whoever himself herself myself yourself ourselves
themselves itself instead meanwhile otherwise therefore moreover
furthermore nevertheless although though unless despite beyond
throughout toward towards among amongst besides regarding concerning
according including except within without onto upon underneath beneath
alongside via per versus
monday tuesday wednesday thursday friday saturday sunday january
february march april may june july august september october november
december spring summer autumn fall winter today tomorrow yesterday
tonight week weeks weekend year years decade decades century centuries
moment instant period periods era
zero one two three four five six seven eight nine eleven twelve
thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty
thirty forty fifty sixty seventy eighty ninety thousand million billion
first second third fourth fifth sixth seventh eighth ninth tenth
half quarter double triple dozen
red orange yellow green blue purple pink brown gray grey white black
north south east west northern southern eastern western upper lower
inner outer front rear forward backward upward downward leftward
rightward horizontal vertical diagonal clockwise counterclockwise
""".split()

# Domain terms from the scenario corpus that deserve presence even when a
# message uses them only once.
DOMAIN_WORDS = """
robot robots robotics autonomous mobile sensor sensors obstacle avoidance
controller control motor proportional integral derivative function python
code variable variables error localization mapping slam kalman filter
particle extended algorithm algorithms navigation path planning wheel
actuator actuators battery power compute computing embedded hardware
software latency network edge node nodes context token tokens model
inference session client server distributed
""".split()


def main() -> None:
    root = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")
    data_dir = os.path.join(root, "src", "discedge", "data")

    corpus_words = set()
    for name in ("scenario_default.yaml", "scenario_mobility.yaml"):
        with open(os.path.join(data_dir, name), "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
        for message in doc.get("messages", []):
            corpus_words.update(extract_word_counts(message))

    words = []
    seen = set()
    for word in COMMON_WORDS + DOMAIN_WORDS + sorted(corpus_words):
        lowered = word.lower()
        if lowered not in seen:
            seen.add(lowered)
            words.append(lowered)

    entries = build_entries(words)
    out_path = os.path.join(data_dir, "default.vocab")
    write_vocab(entries, out_path)
    print(f"wrote {len(entries)} entries ({len(words)} words) to {out_path}")


if __name__ == "__main__":
    main()
